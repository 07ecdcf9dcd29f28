import numpy as np
import pytest

from hilbertsbf import backfit
from hilbertsbf.errors import InvariantError
from hilbertsbf.simulate import (
    Sim1Config,
    Sim2Config,
    XI_COV,
    XI_MEAN,
    XI_SD,
    error_decomposition,
    gen_sim1,
    gen_sim2,
    perturb_predictors,
    run_sim1,
    run_sim2,
    run_study,
    sample_circle_density,
    sim2_basis_fields,
    sim2_mean_curve,
    sim2_response,
    transported_frame,
    vonmises_clr,
)
from hilbertsbf.spaces import EuclideanSpace
from hilbertsbf.sphere import circle_grid

from scipy.stats import truncnorm


class TestGenSim1:
    def test_predictor_moments(self):
        cfg = Sim1Config(n=400, reps=8, seed=3, circle_size=24)
        xs = np.vstack([ds.xi for ds in gen_sim1(cfg)])
        m = xs.shape[0]
        se_mean = XI_SD / np.sqrt(m)
        assert abs(xs[:, 0].mean() - XI_MEAN) < 4 * se_mean
        cov = np.cov(xs.T)
        # MC standard error of the covariance of two correlated normals
        se_cov = np.sqrt((XI_SD**4 + XI_COV**2) / m)
        assert abs(cov[0, 1] - XI_COV) < 4 * se_cov

    def test_zero_exponents_give_uniform(self):
        angles, weights = circle_grid(16)
        c1 = vonmises_clr(angles, weights, 0.0, 1.0)
        # at x = 0.5 the first design exponent cos(pi x) vanishes and at
        # x in {0, 0.5, 1} the second sin(2 pi x) vanishes; with delta = 0 the
        # response is the uniform density (all clr coordinates zero)
        coords = np.cos(np.pi * 0.5) * c1 + np.sin(2 * np.pi * 0.5) * c1 + 0.0 * c1
        np.testing.assert_allclose(coords, 0.0, atol=1e-15)

    def test_truth_satisfies_population_centering(self):
        # E cos(pi xi_1) restricted to D vanishes by the symmetry of the design
        cfg = Sim1Config(n=4000, reps=5, seed=9, circle_size=16)
        vals = []
        for ds in gen_sim1(cfg):
            in_d = np.all((ds.xi >= 0) & (ds.xi <= 1), axis=1)
            vals.append(np.cos(np.pi * ds.xi[in_d, 0]).mean())
            vals.append(np.sin(2 * np.pi * ds.xi[in_d, 1]).mean())
        assert abs(np.mean(vals)) < 3.0 / np.sqrt(4000 * 5)

    def test_responses_are_valid_elements(self):
        cfg = Sim1Config(n=5, reps=1, seed=1, circle_size=32)
        ds = next(gen_sim1(cfg))
        data = ds.regression_data()
        for el in data.responses:
            assert np.all(el.coeffs > 0)

    def test_reconstructed_arm_shares_base_data(self):
        base = next(gen_sim1(Sim1Config(n=6, reps=1, seed=42, circle_size=32)))
        recon = next(gen_sim1(Sim1Config(n=6, n_star=50, reps=1, seed=42, circle_size=32)))
        np.testing.assert_array_equal(base.xi, recon.xi)
        assert not np.allclose(base.response_coords, recon.response_coords)

    def test_determinism(self):
        a = next(gen_sim1(Sim1Config(n=6, reps=1, seed=5, circle_size=32)))
        b = next(gen_sim1(Sim1Config(n=6, reps=1, seed=5, circle_size=32)))
        np.testing.assert_array_equal(a.response_coords, b.response_coords)


class TestCircleSampler:
    def test_uniform_density_gives_uniform_draws(self, rng):
        angles, weights = circle_grid(64)
        vals = np.full(64, 1 / (2 * np.pi))
        draws = sample_circle_density(rng, vals, angles, 20000)
        hist, _ = np.histogram(draws, bins=8, range=(0, 2 * np.pi))
        assert hist.std() / hist.mean() < 0.05

    def test_concentrated_density_targets(self, rng):
        angles, weights = circle_grid(128)
        kappa = 4.0
        vals = np.exp(kappa * np.cos(angles - np.pi)) / (2 * np.pi * np.i0(kappa))
        draws = sample_circle_density(rng, vals, angles, 20000)
        # circular mean should sit at pi
        mean_angle = np.angle(np.exp(1j * draws).mean()) % (2 * np.pi)
        assert abs(mean_angle - np.pi) < 0.05


class TestGenSim2:
    def test_score_scale(self):
        cfg = Sim2Config(n=2000, reps=2, seed=13)
        etas = np.vstack([ds.eta for ds in gen_sim2(cfg)])
        # independent quadrature oracle for the truncated-normal moment
        x = np.linspace(-cfg.trunc_bound, cfg.trunc_bound, 200001)
        phi = np.exp(-0.5 * (x / cfg.trunc_sd) ** 2)
        target_sd = np.sqrt(np.trapezoid(x**2 * phi, x) / np.trapezoid(phi, x))
        sds = etas.std(axis=0, ddof=1)
        expected = np.array(cfg.score_scales) * target_sd
        se = expected / np.sqrt(2 * 2000)
        assert np.all(np.abs(sds - expected) < 3 * se)

    def test_zero_scores_give_mean_curves_and_pure_noise(self):
        t = np.linspace(0, 1, 9)
        mu = sim2_mean_curve(1, t)
        psi1, psi2 = sim2_basis_fields(mu, t)
        tangent = 0.0 * psi1 + 0.0 * psi2
        np.testing.assert_allclose(tangent, 0.0)
        assert sim2_response(np.zeros((3, 4))).tolist() == [0.0, 0.0, 0.0]

    def test_curves_stay_on_sphere(self):
        cfg = Sim2Config(n=4, reps=1, seed=2, time_size=17, use_estimated_scores=True)
        ds = next(gen_sim2(cfg))
        for k in range(2):
            norms = np.linalg.norm(ds.curves[k], axis=2)
            np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_basis_fields_orthonormal(self):
        t = np.linspace(0, 1, 101)
        w = np.full(101, 1 / 100)
        w[0] = w[-1] = 1 / 200
        for k in (1, 2):
            mu = sim2_mean_curve(k, t)
            psi1, psi2 = sim2_basis_fields(mu, t)
            g11 = w @ np.sum(psi1 * psi1, axis=1)
            g22 = w @ np.sum(psi2 * psi2, axis=1)
            g12 = w @ np.sum(psi1 * psi2, axis=1)
            assert g11 == pytest.approx(1.0, abs=1e-4)
            assert g22 == pytest.approx(1.0, abs=1e-4)
            assert g12 == pytest.approx(0.0, abs=1e-12)

    def test_transported_frame_is_orthonormal_tangent(self):
        t = np.linspace(0, 1, 33)
        mu = sim2_mean_curve(2, t)
        e1, e2 = transported_frame(mu)
        for field in (e1, e2):
            np.testing.assert_allclose(np.linalg.norm(field, axis=1), 1.0, atol=1e-10)
            np.testing.assert_allclose(np.sum(field * mu, axis=1), 0.0, atol=1e-10)
        np.testing.assert_allclose(np.sum(e1 * e2, axis=1), 0.0, atol=1e-10)

    def test_determinism_and_estimated_scores(self):
        cfg = Sim2Config(n=60, reps=1, seed=6, time_size=21, use_estimated_scores=True)
        a = next(gen_sim2(cfg))
        b = next(gen_sim2(cfg))
        np.testing.assert_array_equal(a.eta_hat, b.eta_hat)
        for r in range(4):
            assert np.corrcoef(a.eta_hat[:, r], a.eta[:, r])[0, 1] > 0.8


class TestMetrics:
    def test_identity_exact(self, rng):
        from hilbertsbf.kernels import Domain, GridSpec

        grids = [GridSpec.for_domain(Domain(((0.0, 1.0),)), 7)]
        truth = [rng.standard_normal((7, 2))]
        est = [rng.standard_normal((5, 7, 2))]
        imse, isb, iv = error_decomposition(truth, est, grids, np.ones(2))
        np.testing.assert_allclose(imse, isb + iv, atol=1e-12)
        assert imse[0] > 0

    def test_report_identity_and_determinism(self):
        cfg = dict(n=150, reps=2, seed=21, circle_size=24, grid_nodes=11)
        rep1 = run_sim1(Sim1Config(**cfg))
        rep2 = run_sim1(Sim1Config(**cfg))
        rep1.verify_identity()
        np.testing.assert_array_equal(rep1.imse, rep2.imse)
        assert rep1.reps_failed == 0

    def test_run_study_dispatch(self):
        reports = run_study("sim1", [(150, None)], reps=1, seed=33,
                            circle_size=24, grid_nodes=11)
        assert reports[0].study == "sim1" and "true" in reports[0].arm
        with pytest.raises(InvariantError):
            run_study("sim9", [(40, None)], reps=1)

    def test_sim2_report_well_formed(self):
        rep = run_sim2(Sim2Config(n=250, reps=1, seed=3))
        rep.verify_identity()
        assert rep.imse.shape == (3,)
        assert rep.reps_completed == 1


class TestPerturb:
    def make(self, rng):
        x = rng.uniform(0, 1, 50)
        return backfit.RegressionData.from_coords(
            [x], np.zeros((50, 1)), [[(0.0, 1.0)]], EuclideanSpace(1)
        )

    def test_sigma_zero_identity(self, rng):
        data = self.make(rng)
        out = perturb_predictors(data, 0.0, rng)
        np.testing.assert_array_equal(out.predictors[0], data.predictors[0])

    def test_bounded_law_bounded_shift(self, rng):
        data = self.make(rng)
        out = perturb_predictors(data, 0.05, rng, law="uniform")
        assert np.max(np.abs(out.predictors[0] - data.predictors[0])) <= 0.05

    def test_gaussian_max_scaling(self, rng):
        data = self.make(rng)
        sigma = 0.1
        maxes = []
        for _ in range(30):
            out = perturb_predictors(data, sigma, rng)
            maxes.append(np.max(np.abs(out.predictors[0] - data.predictors[0])))
        expected = sigma * np.sqrt(2 * np.log(50))
        assert 0.5 * expected < np.mean(maxes) < 1.5 * expected

    def test_unknown_law(self, rng):
        with pytest.raises(InvariantError):
            perturb_predictors(self.make(rng), 0.1, rng, law="cauchy")
