import numpy as np
import pytest

from hilbertsbf.densrec import (
    SampleSet,
    SphereGeometry,
    boundary_weight,
    cv_bandwidth,
    default_candidates,
    epanechnikov,
    min_coverage_radius,
    pelletier_values,
    raw_quadrature_mass,
    reconstruct_box,
    reconstruct_sphere,
)
from hilbertsbf.errors import BandwidthTooSmallError, InvariantError
from hilbertsbf.kernels import Domain, GridSpec
from hilbertsbf.spaces import distance, norm, subtract, zero
from hilbertsbf.sphere import circle_grid, sphere2_grid

UNIT = Domain(((0.0, 1.0),))


def vonmises_density(angles, mean=0.0, kappa=1.0):
    vals = np.exp(kappa * np.cos(angles - mean)) / (2 * np.pi * np.i0(kappa))
    return vals


@pytest.fixture
def circle():
    angles, weights = circle_grid(200)
    return SphereGeometry(1, angles, weights)


class TestEpanechnikov:
    def test_unit_mass_1d(self):
        t = np.linspace(0, 1, 100001)
        vals = epanechnikov(t, 1)
        assert 2 * np.trapezoid(vals, t) == pytest.approx(1.0, abs=1e-8)

    def test_unit_mass_2d(self):
        # radial integral: int_0^1 c (1 - r^2) 2 pi r dr = 1
        r = np.linspace(0, 1, 100001)
        vals = epanechnikov(r, 2) * 2 * np.pi * r
        assert np.trapezoid(vals, r) == pytest.approx(1.0, abs=1e-8)

    def test_support(self):
        assert epanechnikov(1.2, 1) == 0.0


class TestBoundaryWeight:
    def test_interior_is_one(self):
        w = boundary_weight(np.array([[0.5]]), UNIT, 0.2)
        assert abs(w[0] - 1.0) < 1e-10

    def test_near_edge_above_one(self):
        w = boundary_weight(np.array([[0.02]]), UNIT, 0.2)
        assert w[0] > 1.0

    def test_2d_interior_is_one(self):
        dom = Domain(((0.0, 1.0), (0.0, 1.0)))
        w = boundary_weight(np.array([[0.5, 0.5]]), dom, 0.25)
        assert abs(w[0] - 1.0) < 1e-10

    def test_corner_weight_near_four(self):
        dom = Domain(((0.0, 1.0), (0.0, 1.0)))
        w = boundary_weight(np.array([[0.0, 0.0]]), dom, 0.2)
        assert w[0] == pytest.approx(4.0, rel=1e-9)

    def test_3d_rejected(self):
        dom = Domain(((0.0, 1.0),) * 3)
        with pytest.raises(InvariantError):
            boundary_weight(np.zeros((1, 3)), dom, 0.2)


class TestReconstructBox:
    def test_single_sample_is_normalized_bump(self):
        # n*=1 reduction: the output is exactly the boundary-corrected kernel
        # bump renormalized to unit quadrature mass
        dom = Domain(((-1.0, 1.0),))
        grid = GridSpec.for_domain(dom, 401)
        h = 1.05
        el = reconstruct_box(SampleSet(np.array([[0.0]])), dom, grid, h)
        x = grid.nodes[:, 0]
        bump = epanechnikov(np.abs(x) / h, 1) * boundary_weight(grid.nodes, dom, h)
        bump = bump / (grid.weights @ bump)
        np.testing.assert_allclose(el.coeffs, bump, rtol=1e-12)
        np.testing.assert_allclose(el.coeffs, el.coeffs[::-1], atol=1e-14)  # symmetric

    def test_bump_positivity_enforced_on_wide_domains(self):
        # a compact kernel cannot be positive far from its only sample
        dom = Domain(((-10.0, 10.0),))
        grid = GridSpec.for_domain(dom, 201)
        with pytest.raises(BandwidthTooSmallError):
            reconstruct_box(SampleSet(np.array([[0.0]])), dom, grid, 1.0)

    def test_unit_integral(self, rng):
        grid = GridSpec.for_domain(UNIT, 81)
        el = reconstruct_box(SampleSet(rng.uniform(0, 1, (300, 1))), UNIT, grid, 0.25)
        assert grid.weights @ el.coeffs == pytest.approx(1.0, abs=1e-10)
        assert np.all(el.coeffs > 0)

    def test_uniform_truth_recovered(self, rng):
        grid = GridSpec.for_domain(UNIT, 81)
        el = reconstruct_box(SampleSet(rng.uniform(0, 1, (10000, 1))), UNIT, grid, 0.2)
        assert np.max(np.abs(el.coeffs - 1.0)) < 0.1

    def test_too_small_bandwidth_names_node(self, rng):
        grid = GridSpec.for_domain(UNIT, 41)
        samples = SampleSet(rng.uniform(0.45, 0.55, (50, 1)))
        with pytest.raises(BandwidthTooSmallError) as err:
            reconstruct_box(samples, UNIT, grid, 0.05)
        assert err.value.node is not None

    def test_points_outside_domain_rejected(self):
        grid = GridSpec.for_domain(UNIT, 41)
        with pytest.raises(InvariantError):
            reconstruct_box(SampleSet(np.array([[1.5]])), UNIT, grid, 0.5)

    def test_2d_box(self, rng):
        dom = Domain(((0.0, 1.0), (0.0, 1.0)))
        grid = GridSpec.for_domain(dom, 15)
        el = reconstruct_box(SampleSet(rng.uniform(0, 1, (500, 2))), dom, grid, 0.4)
        assert grid.weights @ el.coeffs == pytest.approx(1.0, abs=1e-10)


class TestReconstructSphere:
    def test_circle_aggregate_mass_tight(self, circle, rng):
        # wrapped kernel sum: analytically unit mass; 200-node quadrature error
        # averages below 1e-6 over 1e4 samples at a wide bandwidth
        draws = rng.vonmises(0.0, 1.0, 10000)
        mass = raw_quadrature_mass(SampleSet(draws), circle, 2.0)
        assert abs(mass - 1.0) < 1e-6

    def test_circle_mass_contract(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 400)
        for h in (0.5, 1.0, 2.5):
            assert abs(raw_quadrature_mass(SampleSet(draws), circle, h) - 1.0) < 1e-3

    def test_element_exact_mass(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 500)
        el = reconstruct_sphere(SampleSet(draws), circle, 0.8)
        assert circle.weights @ el.coeffs == pytest.approx(1.0, abs=1e-12)

    def test_single_sample_north_pole_symmetric(self):
        # raw estimator values at a moderate bandwidth: symmetric about the
        # pole and maximal there (a strictly positive element would need h
        # near pi, where the volume-density correction dominates the far side)
        nodes, weights = sphere2_grid(24, 48)
        geo = SphereGeometry(2, nodes, weights)
        raw = pelletier_values(SampleSet(np.array([[0.0, 0.0, 1.0]])), geo, 1.0)
        vals = raw.reshape(24, 48)
        assert np.max(np.ptp(vals, axis=1)) < 1e-12  # constant along longitude
        assert np.argmax(vals[:, 0]) == 0
        assert vals[-1, 0] == 0.0  # compact support

    def test_single_sample_positivity_needs_near_pi_bandwidth(self):
        nodes, weights = sphere2_grid(24, 48)
        geo = SphereGeometry(2, nodes, weights)
        samples = SampleSet(np.array([[0.0, 0.0, 1.0]]))
        with pytest.raises(BandwidthTooSmallError):
            reconstruct_sphere(samples, geo, 2.5)
        el = reconstruct_sphere(samples, geo, 3.12)
        assert np.all(el.coeffs > 0)

    def test_sphere2_mass_contract(self, rng):
        nodes, weights = sphere2_grid(48, 96)
        geo = SphereGeometry(2, nodes, weights)
        z = rng.standard_normal((2000, 3))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        assert abs(raw_quadrature_mass(SampleSet(z), geo, 1.0) - 1.0) < 1e-3

    def test_vonmises_error_decreases_with_sample_size(self, circle):
        truth = vonmises_density(circle.nodes)
        from hilbertsbf.spaces import BayesHilbertSpace, HilbertElement

        space = BayesHilbertSpace(circle.weights, circle.nodes[:, None])
        truth_el = HilbertElement(space, truth / (circle.weights @ truth))
        rng = np.random.default_rng(77)
        errs = []
        for nstar in (100, 400, 10000):
            dists = []
            for _ in range(3):
                draws = rng.vonmises(0.0, 1.0, nstar)
                el = reconstruct_sphere(SampleSet(draws), circle)
                dists.append(distance(el, truth_el))
            errs.append(np.mean(dists))
        assert errs[0] > errs[1] > errs[2]

    def test_bandwidth_above_pi_rejected(self, circle):
        with pytest.raises(InvariantError):
            reconstruct_sphere(SampleSet(np.array([0.0])), circle, 3.5)

    def test_sample_validation(self, circle):
        geo2 = SphereGeometry(2, *sphere2_grid(8, 16))
        with pytest.raises(InvariantError):
            reconstruct_sphere(SampleSet(np.array([[1.0, 1.0, 1.0]])), geo2, 1.0)


class TestCvBandwidth:
    def test_single_candidate(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 200)
        h = cv_bandwidth(SampleSet(draws), sphere=circle, candidates=[1.3])
        assert h == 1.3

    def test_tie_prefers_smaller(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 200)
        h1 = cv_bandwidth(SampleSet(draws), sphere=circle, candidates=[0.9, 0.9])
        assert h1 == 0.9

    def test_peaked_truth_prefers_smaller_of_extremes(self, rng):
        angles, weights = circle_grid(200)
        circle = SphereGeometry(1, angles, weights)
        # concentrated but full-coverage truth: both candidates positivity-feasible
        draws = rng.vonmises(0.0, 2.0, 2000)
        h = cv_bandwidth(SampleSet(draws), sphere=circle, candidates=[0.35, 3.0])
        assert h == 0.35

    def test_infeasible_candidates_filtered(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 50)
        r = min_coverage_radius(SampleSet(draws), sphere=circle)
        h = cv_bandwidth(SampleSet(draws), sphere=circle, candidates=[r / 2, r * 1.5])
        assert h == pytest.approx(r * 1.5)
        with pytest.raises(InvariantError):
            cv_bandwidth(SampleSet(draws), sphere=circle, candidates=[r / 2])

    def test_default_candidates_start_positive(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 100)
        cands = default_candidates(SampleSet(draws), sphere=circle)
        el = reconstruct_sphere(SampleSet(draws), circle, cands[0])
        assert np.all(el.coeffs > 0)

    def test_box_cv_runs(self, rng):
        grid = GridSpec.for_domain(UNIT, 41)
        draws = rng.uniform(0, 1, (150, 1))
        h = cv_bandwidth(SampleSet(draws), domain=UNIT, grid=grid)
        el = reconstruct_box(SampleSet(draws), UNIT, grid, h)
        assert np.all(el.coeffs > 0)

    def test_deterministic(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 150)
        a = cv_bandwidth(SampleSet(draws), sphere=circle)
        b = cv_bandwidth(SampleSet(draws.copy()), sphere=circle)
        assert a == b


class TestSampleSet:
    def test_nonempty_required(self):
        with pytest.raises(InvariantError):
            SampleSet(np.empty((0, 1)))

    def test_stored_bandwidth_used(self, circle, rng):
        draws = rng.vonmises(0.0, 1.0, 100)
        el1 = reconstruct_sphere(SampleSet(draws, bandwidth=1.1), circle)
        el2 = reconstruct_sphere(SampleSet(draws), circle, 1.1)
        np.testing.assert_array_equal(el1.coeffs, el2.coeffs)


def test_refinement_consistency(rng):
    # doubling the circle grid changes the reconstruction by little
    draws = rng.vonmises(0.5, 2.0, 3000)
    els = []
    for size in (100, 200):
        angles, weights = circle_grid(size)
        geo = SphereGeometry(1, angles, weights)
        els.append(reconstruct_sphere(SampleSet(draws), geo, 0.7))
    assert abs(norm(subtract(els[0], zero(els[0].space)))
               - norm(subtract(els[1], zero(els[1].space)))) < 1e-2
