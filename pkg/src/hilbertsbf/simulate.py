"""Data generators and Monte-Carlo studies for the two benchmark designs.

Study 1: density-valued responses on the circle driven by two Gaussian scalar
predictors, with an optional sample-only observation scheme reconstructed by
kernel density estimation.  Study 2: scalar responses driven by the functional
PC scores of two sphere-valued random curves.

Replication streams are derived from one seed so that reports are fully
deterministic and arms sharing a sample size also share their base data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from . import backfit
from . import bandwidth as bw
from . import densrec
from . import scores as scores_mod
from .errors import HilbertSbfError, InvariantError
from .kernels import Domain
from .spaces import BayesHilbertSpace, EuclideanSpace
from .sphere import circle_grid, parallel_transport, sphere_exp


# ---------------------------------------------------------------------------
# Study 1: circle-density responses


@dataclass
class Sim1Config:
    """One arm of the first study: sample size and observation scheme."""

    n: int = 400
    n_star: int | None = None          # None: true densities observed directly
    reps: int = 100
    seed: int = 0
    circle_size: int = 100
    concentration: float = 1.0
    means: tuple[float, float, float] = (-np.pi / 2.0, np.pi / 2.0, 0.0)
    grid_nodes: int = 41
    cv_folds: int = 5
    tol: float = 1e-4
    max_iter: int = 50

    def __post_init__(self):
        if self.n < 1 or self.reps < 1 or (self.n_star is not None and self.n_star < 1):
            raise InvariantError("sample sizes and repetition counts must be positive")


XI_MEAN = 0.5
XI_SD = 0.25
XI_COV = 0.25**3


def _xi_cholesky():
    cov = np.array([[XI_SD**2, XI_COV], [XI_COV, XI_SD**2]])
    return np.linalg.cholesky(cov)


def vonmises_clr(angles, weights, mean, kappa):
    """clr coordinates of a von Mises density on the circle grid."""
    logs = kappa * np.cos(angles - mean)
    return logs - np.dot(weights, logs) / np.sum(weights)


def sample_circle_density(rng, values, angles, size):
    """Inverse-CDF sampling on the angular grid with linear CDF interpolation."""
    step = angles[1] - angles[0]
    nodes = np.append(angles, angles[0] + 2.0 * np.pi)
    vals = np.append(values, values[0])
    cdf = np.concatenate([[0.0], np.cumsum(step * 0.5 * (vals[:-1] + vals[1:]))])
    u = rng.random(size) * cdf[-1]
    return np.mod(np.interp(u, cdf, nodes), 2.0 * np.pi)


@dataclass
class Sim1Dataset:
    xi: np.ndarray                       # (n, 2)
    response_coords: np.ndarray          # clr rows of the fitted responses
    space: BayesHilbertSpace
    truth: list[np.ndarray]              # clr rows of f_j at the estimation nodes
    grids: list
    domains: list[Domain]
    fold_seed: int

    def regression_data(self) -> backfit.RegressionData:
        return backfit.RegressionData.from_coords(
            [self.xi[:, 0], self.xi[:, 1]], self.response_coords, self.domains, self.space
        )


def gen_sim1(config: Sim1Config):
    """Yield the per-replication datasets of study 1.

    The underlying truth (predictors and true densities) depends only on
    ``(seed, n, rep)``; the observation sampling stream additionally mixes in
    ``n_star``, so arms with different observation schemes stay paired.
    """
    angles, weights = circle_grid(config.circle_size)
    space = BayesHilbertSpace(weights, angles[:, None])
    kap = config.concentration
    clr_g = [vonmises_clr(angles, weights, m, kap) for m in config.means]
    domains = [Domain(((0.0, 1.0),)), Domain(((0.0, 1.0),))]
    grids = backfit.default_grids(domains, config.grid_nodes)
    chol = _xi_cholesky()
    geometry = densrec.SphereGeometry(1, angles, weights)
    for rep in range(config.reps):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, config.n, rep, 0]))
        z = rng.standard_normal((config.n, 2))
        xi = XI_MEAN + z @ chol.T
        delta = rng.standard_normal(config.n)
        coords = (
            np.cos(np.pi * xi[:, 0])[:, None] * clr_g[0][None, :]
            + np.sin(2.0 * np.pi * xi[:, 1])[:, None] * clr_g[1][None, :]
            + delta[:, None] * clr_g[2][None, :]
        )
        fold_seed = int(rng.integers(2**31))
        if config.n_star is not None:
            rng_s = np.random.default_rng(
                np.random.SeedSequence([config.seed, config.n, rep, 1, config.n_star])
            )
            recon = np.empty_like(coords)
            for i in range(config.n):
                values = space.from_coords(coords[i])
                draws = sample_circle_density(rng_s, values, angles, config.n_star)
                element = densrec.reconstruct_sphere(densrec.SampleSet(draws), geometry)
                recon[i] = space.to_coords(element.coeffs)
            coords = recon
        truth = [
            np.cos(np.pi * grids[0].nodes[:, 0])[:, None] * clr_g[0][None, :],
            np.sin(2.0 * np.pi * grids[1].nodes[:, 0])[:, None] * clr_g[1][None, :],
        ]
        yield Sim1Dataset(xi, coords, space, truth, grids, domains, fold_seed)


# ---------------------------------------------------------------------------
# Study 2: scalar responses on sphere-curve PC scores


@dataclass
class Sim2Config:
    """One arm of the second study."""

    n: int = 400
    reps: int = 100
    seed: int = 0
    time_size: int = 51
    score_scales: tuple = (1.0, 0.75, 0.75, 0.5)   # c_11, c_12, c_21, c_22
    trunc_sd: float = 0.5
    trunc_bound: float = 1.0
    noise_sd: float = 0.1
    use_estimated_scores: bool = False
    univariate: bool = False
    cv_folds: int = 5
    tol: float = 1e-4
    max_iter: int = 50

    def __post_init__(self):
        if self.n < 1 or self.reps < 1:
            raise InvariantError("sample sizes and repetition counts must be positive")


def _time_grid(size):
    t = np.linspace(0.0, 1.0, size)
    w = np.full(size, t[1] - t[0])
    w[0] = w[-1] = 0.5 * (t[1] - t[0])
    return t, w


def sim2_mean_curve(k: int, t: np.ndarray) -> np.ndarray:
    """The k-th design mean curve on the 2-sphere (k in {1, 2})."""
    theta = 0.5 * np.pi * (t if k == 1 else t**2)
    phi = np.pi * (t if k == 1 else t**2)
    return np.column_stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]
    )


def transported_frame(curve: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent frame along a sphere curve by stepwise transport."""
    t_len = curve.shape[0]
    e1 = np.empty_like(curve)
    e2 = np.empty_like(curve)
    p0 = curve[0]
    seed = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(seed, p0)) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    v1 = seed - np.dot(seed, p0) * p0
    e1[0] = v1 / np.linalg.norm(v1)
    e2[0] = np.cross(p0, e1[0])
    for t in range(1, t_len):
        e1[t] = parallel_transport(curve[t - 1], curve[t], e1[t - 1])
        e2[t] = parallel_transport(curve[t - 1], curve[t], e2[t - 1])
    return e1, e2


def sim2_basis_fields(curve: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The two orthonormal tangent basis fields: Fourier pair on a transported frame."""
    e1, e2 = transported_frame(curve)
    psi1 = np.sqrt(2.0) * np.sin(2.0 * np.pi * t)[:, None] * e1
    psi2 = np.sqrt(2.0) * np.cos(2.0 * np.pi * t)[:, None] * e2
    return psi1, psi2


def sim2_response(eta: np.ndarray) -> np.ndarray:
    """The noiseless regression surface on the four scores."""
    return np.sin(np.pi * eta[:, 0]) / 5.0 - eta[:, 1] ** 3 + eta[:, 2] * np.tan(eta[:, 3])


@dataclass
class Sim2Dataset:
    eta: np.ndarray                      # (n, 4) true scores
    eta_hat: np.ndarray | None           # estimated scores (aligned), if requested
    y: np.ndarray                        # (n,)
    curves: list[np.ndarray] | None      # two (n, T, 3) arrays, if generated
    fold_seed: int
    regenerated: int

    def scores(self, estimated: bool) -> np.ndarray:
        if estimated:
            if self.eta_hat is None:
                raise InvariantError("estimated scores were not generated")
            return self.eta_hat
        return self.eta


def gen_sim2(config: Sim2Config):
    """Yield the per-replication datasets of study 2.

    Sphere curves are built by the exponential map along the two mean curves
    from the score-weighted basis fields; any draw whose tangent vector were
    to reach the cut locus is regenerated (and counted).
    """
    t, w = _time_grid(config.time_size)
    mus = [sim2_mean_curve(1, t), sim2_mean_curve(2, t)]
    bases = [sim2_basis_fields(mus[0], t), sim2_basis_fields(mus[1], t)]
    a = config.trunc_bound / config.trunc_sd
    c = np.asarray(config.score_scales)
    need_curves = config.use_estimated_scores
    for rep in range(config.reps):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, config.n, rep, 0]))
        eta = np.empty((config.n, 4))
        regenerated = 0
        filled = 0
        while filled < config.n:
            u = rng.random((config.n - filled, 4))
            cand = c[None, :] * truncnorm.ppf(u, -a, a, loc=0.0, scale=config.trunc_sd)
            # tangent norms stay below pi for all t when each |eta| <= scale
            norms = np.sqrt(2.0) * np.maximum(
                np.abs(cand[:, :2]).max(axis=1), np.abs(cand[:, 2:]).max(axis=1)
            )
            good = norms < np.pi
            regenerated += int((~good).sum())
            take = cand[good]
            eta[filled : filled + take.shape[0]] = take
            filled += take.shape[0]
        y = sim2_response(eta) + config.noise_sd * rng.standard_normal(config.n)
        fold_seed = int(rng.integers(2**31))
        curves = None
        eta_hat = None
        if need_curves:
            curves = []
            for k in range(2):
                psi1, psi2 = bases[k]
                zk = np.empty((config.n, config.time_size, 3))
                for i in range(config.n):
                    tangent = eta[i, 2 * k] * psi1 + eta[i, 2 * k + 1] * psi2
                    for ti in range(config.time_size):
                        zk[i, ti] = sphere_exp(mus[k][ti], tangent[ti])
                curves.append(zk)
            eta_hat = estimate_sim2_scores(curves, w, eta)
        yield Sim2Dataset(eta, eta_hat, y, curves, fold_seed, regenerated)


def estimate_sim2_scores(curves, weights, eta_true) -> np.ndarray:
    """Functional PC scores of the two curve samples, sign-aligned to truth."""
    cols = []
    for k in range(2):
        model, _ = scores_mod.irfpc(curves[k], weights, 2)
        est = model.scores.copy()
        for r in range(2):
            ref = eta_true[:, 2 * k + r]
            if np.dot(est[:, r] - est[:, r].mean(), ref - ref.mean()) < 0:
                est[:, r] = -est[:, r]
        cols.append(est)
    return np.hstack(cols)


SIM2_DOMAINS_MULTI = [
    Domain(((-1.0, 1.0),)),
    Domain(((-0.75, 0.75),)),
    Domain(((-0.75, 0.75), (-0.5, 0.5))),
]
SIM2_DOMAINS_UNI = [
    Domain(((-1.0, 1.0),)),
    Domain(((-0.75, 0.75),)),
    Domain(((-0.75, 0.75),)),
    Domain(((-0.5, 0.5),)),
]


def sim2_truth_multi(grids):
    x1 = grids[0].nodes[:, 0]
    x2 = grids[1].nodes[:, 0]
    x3 = grids[2].nodes
    return [
        (np.sin(np.pi * x1) / 5.0)[:, None],
        (-(x2**3))[:, None],
        (x3[:, 0] * np.tan(x3[:, 1]))[:, None],
    ]


# ---------------------------------------------------------------------------
# Metrics and study drivers


@dataclass
class MetricReport:
    """Monte-Carlo error decomposition of one study arm."""

    study: str
    arm: str
    imse: np.ndarray
    isb: np.ndarray
    iv: np.ndarray
    reps_completed: int
    reps_failed: int
    runtime: float
    config: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def verify_identity(self, atol=1e-10) -> None:
        if np.max(np.abs(self.imse - (self.isb + self.iv))) > atol:
            raise InvariantError("IMSE != ISB + IV beyond tolerance")


def error_decomposition(truth, estimates, grids, coord_weights):
    """IMSE/ISB/IV per component from stacked per-rep coordinate arrays.

    ``estimates[j]`` has shape (M, G_j, p); the decomposition is exact by the
    usual mean/spread split, so IMSE = ISB + IV holds to rounding error.
    """
    d = len(truth)
    imse = np.empty(d)
    isb = np.empty(d)
    iv = np.empty(d)
    for j in range(d):
        est = np.asarray(estimates[j])
        bar = est.mean(axis=0)
        w = grids[j].weights
        sq_bias = ((truth[j] - bar) ** 2) @ coord_weights
        sq_var = np.mean(((est - bar[None]) ** 2) @ coord_weights, axis=0)
        sq_tot = np.mean(((truth[j][None] - est) ** 2) @ coord_weights, axis=0)
        isb[j] = w @ sq_bias
        iv[j] = w @ sq_var
        imse[j] = w @ sq_tot
    return imse, isb, iv


def _fit_with_cbs(data, grids, fold_seed, folds, tol, max_iter):
    config = bw.default_config(data, grids, rule="simulation",
                               folds=folds, seed=fold_seed, tol=tol, max_iter=max_iter)
    selected = bw.cbs_select(data, config, grids)
    fit = backfit.fit(data, selected.bandwidths, grids,
                      tol=tol, max_iter=max_iter, compute_weights=False)
    return fit, selected


def run_sim1(config: Sim1Config) -> MetricReport:
    """One arm of study 1 with CBS bandwidths; failures are recorded, not fatal."""
    start = time.perf_counter()
    estimates = [[], []]
    truth = None
    grids = None
    coord_weights = None
    failures = []
    for rep, ds in enumerate(gen_sim1(config)):
        truth, grids = ds.truth, ds.grids
        coord_weights = ds.space.coord_weights
        try:
            data = ds.regression_data()
            fit, _ = _fit_with_cbs(data, ds.grids, ds.fold_seed, config.cv_folds,
                                   config.tol, config.max_iter)
        except HilbertSbfError as exc:
            failures.append(f"rep {rep}: {exc}")
            continue
        for j in range(2):
            estimates[j].append(fit.component_coords[j])
    if not estimates[0]:
        raise InvariantError("every replication failed: " + "; ".join(failures[:3]))
    imse, isb, iv = error_decomposition(truth, estimates, grids, coord_weights)
    arm = f"n={config.n} " + ("true" if config.n_star is None else f"nstar={config.n_star}")
    return MetricReport(
        study="sim1",
        arm=arm,
        imse=imse,
        isb=isb,
        iv=iv,
        reps_completed=len(estimates[0]),
        reps_failed=len(failures),
        runtime=time.perf_counter() - start,
        config={"n": config.n, "n_star": config.n_star, "reps": config.reps,
                "seed": config.seed, "circle_size": config.circle_size},
        failures=failures,
    )


def run_sim2(config: Sim2Config) -> MetricReport:
    """One arm of study 2 (true/estimated scores, multivariate/univariate model)."""
    start = time.perf_counter()
    space = EuclideanSpace(1)
    domains = SIM2_DOMAINS_UNI if config.univariate else SIM2_DOMAINS_MULTI
    grids = backfit.default_grids(domains)
    truth_grids = grids if not config.univariate else backfit.default_grids(SIM2_DOMAINS_MULTI)
    truth = sim2_truth_multi(truth_grids)
    estimates = [[], [], []]
    failures = []
    for rep, ds in enumerate(gen_sim2(config)):
        sc = ds.scores(config.use_estimated_scores)
        if config.univariate:
            preds = [sc[:, 0], sc[:, 1], sc[:, 2], sc[:, 3]]
        else:
            preds = [sc[:, 0], sc[:, 1], sc[:, 2:4]]
        try:
            data = backfit.RegressionData.from_coords(preds, ds.y[:, None], domains, space)
            fit, _ = _fit_with_cbs(data, grids, ds.fold_seed, config.cv_folds,
                                   config.tol, config.max_iter)
        except HilbertSbfError as exc:
            failures.append(f"rep {rep}: {exc}")
            continue
        estimates[0].append(fit.component_coords[0])
        estimates[1].append(fit.component_coords[1])
        if config.univariate:
            # reassemble the additive surrogate of the planar component on the
            # product grid so all arms are scored against the same truth
            g3 = truth_grids[2]
            f3a = backfit.interpolate_grid_values(grids[2], fit.component_coords[2],
                                                  g3.nodes[:, :1])
            f3b = backfit.interpolate_grid_values(grids[3], fit.component_coords[3],
                                                  g3.nodes[:, 1:])
            estimates[2].append(f3a + f3b)
        else:
            estimates[2].append(fit.component_coords[2])
    if not estimates[0]:
        raise InvariantError("every replication failed: " + "; ".join(failures[:3]))
    imse, isb, iv = error_decomposition(truth, estimates, truth_grids, space.coord_weights)
    arm = (f"n={config.n} {'estimated' if config.use_estimated_scores else 'true'} "
           f"{'uni' if config.univariate else 'multi'}")
    return MetricReport(
        study="sim2",
        arm=arm,
        imse=imse,
        isb=isb,
        iv=iv,
        reps_completed=len(estimates[0]),
        reps_failed=len(failures),
        runtime=time.perf_counter() - start,
        config={"n": config.n, "reps": config.reps, "seed": config.seed,
                "estimated": config.use_estimated_scores, "univariate": config.univariate},
        failures=failures,
    )


def run_study(study: str, arms, reps: int = 100, seed: int = 0, **kwargs) -> list[MetricReport]:
    """Run a list of arms of one study and return their reports.

    For ``sim1`` each arm is ``(n, n_star)`` with ``n_star=None`` for true
    responses; for ``sim2`` each arm is ``(n, estimated: bool, univariate: bool)``.
    """
    reports = []
    for arm in arms:
        if study == "sim1":
            n, n_star = arm
            cfg = Sim1Config(n=n, n_star=n_star, reps=reps, seed=seed, **kwargs)
            reports.append(run_sim1(cfg))
        elif study == "sim2":
            n, estimated, univariate = arm
            cfg = Sim2Config(n=n, reps=reps, seed=seed,
                             use_estimated_scores=estimated, univariate=univariate, **kwargs)
            reports.append(run_sim2(cfg))
        else:
            raise InvariantError(f"unknown study {study!r}")
    return reports


def perturb_predictors(data: backfit.RegressionData, sigma: float, rng,
                       law: str = "gaussian") -> backfit.RegressionData:
    """Additive measurement-error hook: every predictor entry gets sigma * U."""
    if sigma < 0:
        raise InvariantError("sigma must be nonnegative")
    draw = {
        "gaussian": rng.standard_normal,
        "uniform": lambda size: rng.uniform(-1.0, 1.0, size),
    }.get(law)
    if draw is None:
        raise InvariantError(f"unknown error law {law!r}")
    perturbed = [x + sigma * draw(x.shape) if sigma > 0 else x.copy() for x in data.predictors]
    return backfit.RegressionData.from_coords(
        perturbed, data.response_coords, data.domains, data.space
    )
