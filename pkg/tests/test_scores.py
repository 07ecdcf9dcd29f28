import numpy as np
import pytest

from hilbertsbf.errors import InvariantError
from hilbertsbf.scores import (
    hpca,
    hsca,
    irfpc,
    irsc,
    tangent_component_fields,
    variance_threshold_rank,
)
from hilbertsbf.spaces import (
    BayesHilbertSpace,
    EuclideanSpace,
    HilbertElement,
    clr_inv,
    inner,
)
from hilbertsbf.simulate import Sim2Config, gen_sim2
from hilbertsbf.sphere import circle_grid, frechet_mean, sphere_exp


def euclidean_sample(rng, n=40, p=5, spectrum=(3.0, 2.0, 1.0, 0.5, 0.1)):
    return rng.standard_normal((n, p)) @ np.diag(spectrum)


class TestHpca:
    def test_matches_dense_eigendecomposition(self, rng):
        for _ in range(10):
            x = euclidean_sample(rng)
            model = hpca(x, 4, space=EuclideanSpace(5))
            cov = np.cov(x.T, ddof=1)
            ev, evec = np.linalg.eigh(cov)
            ev, evec = ev[::-1], evec[:, ::-1]
            np.testing.assert_allclose(model.eigenvalues, ev[:4], atol=1e-8)
            for r in range(4):
                assert abs(abs(model.components[r] @ evec[:, r]) - 1) < 1e-8

    def test_rank_one_data(self, rng):
        v = rng.standard_normal(6)
        v /= np.linalg.norm(v)
        x = np.outer(rng.standard_normal(20), v)
        model = hpca(x, 2, space=EuclideanSpace(6))
        assert model.eigenvalues[1] == pytest.approx(0.0, abs=1e-10)
        assert abs(abs(model.components[0] @ v) - 1) < 1e-8

    def test_full_rank_reconstruction(self, rng):
        x = euclidean_sample(rng, n=30, p=4, spectrum=(2.0, 1.5, 1.0, 0.5))
        model = hpca(x, 4, space=EuclideanSpace(4))
        rec = model.scores @ model.components + model.mean_coords
        np.testing.assert_allclose(rec, x, atol=1e-8)

    def test_orthonormal_components(self, rng):
        x = euclidean_sample(rng)
        model = hpca(x, 4, space=EuclideanSpace(5))
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)

    def test_scores_zero_mean_and_variance(self, rng):
        x = euclidean_sample(rng, n=80)
        model = hpca(x, 3, space=EuclideanSpace(5))
        np.testing.assert_allclose(model.scores.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(
            model.scores.var(axis=0, ddof=1), model.eigenvalues, atol=1e-8
        )

    def test_sign_determinism(self, rng):
        x = euclidean_sample(rng)
        a = hpca(x, 3, space=EuclideanSpace(5))
        b = hpca(x.copy(), 3, space=EuclideanSpace(5))
        assert np.array_equal(a.scores, b.scores)
        assert all(c[np.argmax(np.abs(c))] > 0 for c in a.components)

    def test_gram_trick_equals_covariance_route(self, rng):
        # explicit covariance assembly on coefficient vectors, small n
        x = euclidean_sample(rng, n=12)
        model = hpca(x, 3, space=EuclideanSpace(5))
        xc = x - x.mean(axis=0)
        cov = xc.T @ xc / (12 - 1)
        ev, evec = np.linalg.eigh(cov)
        ev, evec = ev[::-1], evec[:, ::-1]
        np.testing.assert_allclose(model.eigenvalues, ev[:3], atol=1e-8)
        scr = xc @ evec[:, :3]
        for r in range(3):
            lead = np.argmax(np.abs(evec[:, r]))
            s = 1.0 if evec[lead, r] > 0 else -1.0
            np.testing.assert_allclose(model.scores[:, r], s * scr[:, r], atol=1e-8)

    def test_degenerate_sample_rejected(self):
        x = np.ones((10, 3))
        with pytest.raises(InvariantError):
            hpca(x, 1, space=EuclideanSpace(3))

    def test_rank_limits(self, rng):
        x = euclidean_sample(rng, n=6)
        with pytest.raises(InvariantError):
            hpca(x, 6, space=EuclideanSpace(5))

    def test_bayes_hilbert_sample(self, rng):
        angles, w = circle_grid(30)
        space = BayesHilbertSpace(w, angles[:, None])
        base1 = np.cos(angles) - (w @ np.cos(angles)) / w.sum()
        base2 = np.sin(angles) - (w @ np.sin(angles)) / w.sum()
        coords = np.outer(rng.standard_normal(25) * 2, base1) + np.outer(
            rng.standard_normal(25), base2
        )
        els = [clr_inv(c, space) for c in coords]
        model = hpca(els, 2)
        comps = model.component_elements()
        assert inner(comps[0], comps[0]) == pytest.approx(1.0, abs=1e-8)
        assert inner(comps[0], comps[1]) == pytest.approx(0.0, abs=1e-8)


class TestHsca:
    def test_matches_cross_covariance_svd(self, rng):
        for _ in range(10):
            x = euclidean_sample(rng)
            y = x @ rng.standard_normal((5, 3)) + 0.1 * rng.standard_normal((40, 3))
            model = hsca(x, y, 3, x_space=EuclideanSpace(5), y_space=EuclideanSpace(3))
            xc, yc = x - x.mean(0), y - y.mean(0)
            u, s, _ = np.linalg.svd(xc.T @ yc / 39)
            np.testing.assert_allclose(np.sqrt(model.eigenvalues), s[:3], atol=1e-8)
            for r in range(3):
                assert abs(abs(model.components[r] @ u[:, r]) - 1) < 1e-8

    def test_constant_y_rejected(self, rng):
        x = euclidean_sample(rng)
        y = np.ones((40, 2))
        with pytest.raises(InvariantError, match="degenerate cross-covariance"):
            hsca(x, y, 1, x_space=EuclideanSpace(5), y_space=EuclideanSpace(2))

    def test_y_equals_x_gives_pca_directions(self, rng):
        x = euclidean_sample(rng, n=60)
        sca = hsca(x, x, 3, x_space=EuclideanSpace(5), y_space=EuclideanSpace(5))
        pca = hpca(x, 3, space=EuclideanSpace(5))
        # C_xyx = C_x^2: same eigenvectors, squared eigenvalues
        np.testing.assert_allclose(sca.eigenvalues, pca.eigenvalues**2, atol=1e-8)
        for r in range(3):
            assert abs(abs(sca.components[r] @ pca.components[r]) - 1) < 1e-8

    def test_length_mismatch(self, rng):
        with pytest.raises(InvariantError):
            hsca(
                euclidean_sample(rng, n=10),
                euclidean_sample(rng, n=9),
                1,
                x_space=EuclideanSpace(5),
                y_space=EuclideanSpace(5),
            )


def small_sim2_curves(rng, n=60):
    cfg = Sim2Config(n=n, reps=1, seed=int(rng.integers(2**31)),
                     use_estimated_scores=True, time_size=31)
    ds = next(gen_sim2(cfg))
    t = np.linspace(0, 1, 31)
    w = np.full(31, t[1] - t[0])
    w[0] = w[-1] = (t[1] - t[0]) / 2
    return ds, w


class TestIrfpc:
    def test_scores_track_truth(self, rng):
        ds, w = small_sim2_curves(rng, n=120)
        for k in range(2):
            model, mu = irfpc(ds.curves[k], w, 2)
            for r in range(2):
                c = abs(np.corrcoef(model.scores[:, r], ds.eta[:, 2 * k + r])[0, 1])
                assert c > 0.9

    def test_all_equal_curves_give_zero_scores(self):
        t = np.linspace(0, 1, 9)
        curve = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
        curves = np.tile(curve, (7, 1, 1))
        w = np.full(9, 1 / 9)
        model, mu = irfpc(curves, w, 2)
        np.testing.assert_allclose(model.scores, 0.0)
        np.testing.assert_allclose(model.eigenvalues, 0.0)
        np.testing.assert_allclose(mu, curve, atol=1e-12)

    def test_singleton_grid_is_tangent_pca(self, rng):
        # one time point: scores must match a plain tangent-space PCA at the
        # Frechet mean (divisor n, no centering)
        pole = np.array([0.0, 0.0, 1.0])
        tangents = 0.3 * rng.standard_normal((40, 2))
        pts = np.vstack([
            sphere_exp(pole, np.array([a, b, 0.0])) for a, b in tangents
        ])
        curves = pts[:, None, :]
        # two-node degenerate "grid" is the smallest L2 space; replicate the point
        curves = np.repeat(curves, 2, axis=1)
        w = np.array([0.5, 0.5])
        model, mu = irfpc(curves, w, 2)
        mu_pt = frechet_mean(pts)
        # compare spectra against ambient-coordinate PCA of the log vectors
        from hilbertsbf.sphere import sphere_log

        logs = np.vstack([sphere_log(mu_pt, p) for p in pts])
        gram = logs @ logs.T / 40
        ev = np.linalg.eigvalsh(gram)[::-1][:2]
        np.testing.assert_allclose(model.eigenvalues, ev, atol=1e-10)

    def test_component_fields_are_tangent(self, rng):
        ds, w = small_sim2_curves(rng)
        model, mu = irfpc(ds.curves[0], w, 2)
        fields = tangent_component_fields(model, mu)
        assert len(fields) == 2  # construction validates tangency


class TestIrsc:
    def test_scores_correlate_with_truth(self, rng):
        ds, w = small_sim2_curves(rng, n=120)
        y = [HilbertElement(EuclideanSpace(1), np.array([v])) for v in ds.y]
        model, mu = irsc(ds.curves[0], w, y, 1)
        # the response loads on eta_11 and eta_12; the leading singular
        # direction lives in their span
        proj = np.abs(
            np.corrcoef(np.column_stack([model.scores[:, 0], ds.eta[:, 0], ds.eta[:, 1]]).T)
        )
        assert max(proj[0, 1], proj[0, 2]) > 0.5

    def test_zero_y_rejected(self, rng):
        ds, w = small_sim2_curves(rng)
        y = [HilbertElement(EuclideanSpace(1), np.array([0.0])) for _ in range(len(ds.y))]
        with pytest.raises(InvariantError, match="degenerate"):
            irsc(ds.curves[0], w, y, 1)

    def test_extrinsic_oracle_at_fixed_mean(self, rng):
        # with the mean curve pinned, irsc is exactly hsca on the flattened
        # ambient log coordinates
        ds, w = small_sim2_curves(rng, n=50)
        from hilbertsbf.sphere import intrinsic_mean_curve, log_field
        from hilbertsbf.spaces import L2GridSpace

        mu = intrinsic_mean_curve(ds.curves[0])
        coords = np.vstack(
            [log_field(mu, c, w).coords() for c in ds.curves[0]]
        )
        space = L2GridSpace(w, node_dim=3)
        y = ds.y[:, None]
        direct = hsca(coords, y, 1, x_space=space, y_space=EuclideanSpace(1),
                      divisor="n", center_x=False)
        model, _ = irsc(ds.curves[0], w, y, 1, y_space=EuclideanSpace(1), mean_curve=mu)
        np.testing.assert_allclose(model.scores, direct.scores, atol=1e-10)
        np.testing.assert_allclose(model.eigenvalues, direct.eigenvalues, atol=1e-12)


def test_variance_threshold_rank():
    assert variance_threshold_rank([4.0, 3.0, 2.0, 1.0], 0.6) == 2
    assert variance_threshold_rank([1.0, 0.0], 0.99) == 1
