"""Marginal density estimation and the smooth backfitting solver.

The additive model is fitted by iterating the estimated system of integral
equations component by component (Gauss-Seidel order, first to last).  All the
response geometry is handled through isometric linear coordinates, so the
iteration itself is plain linear algebra; alongside the fitted component maps,
the solver reproduces the per-observation weight arrays ``w_j[i][node]`` such
that each component map equals the weighted combination of the responses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditionAError,
    ConvergenceError,
    DomainError,
    InvariantError,
)
from .kernels import Domain, GridSpec, kernel_matrix
from .spaces import HilbertElement, SpaceDescriptor, coords_matrix

MARGINAL_DENSITY_FLOOR = 1e-12


class RegressionData:
    """Observations ``(xi_1, ..., xi_d, Y)`` with per-predictor estimation domains.

    ``predictors`` is a list of d arrays of shape (n, L_j); responses all live
    in one Hilbert space.  At least one observation must fall inside the full
    domain ``D = D_1 x ... x D_d``.
    """

    def __init__(self, predictors, responses, domains):
        responses = list(responses)
        if not responses:
            raise InvariantError("need at least one observation")
        space = responses[0].space
        coords = coords_matrix(responses)
        self._init(predictors, coords, domains, space)

    @classmethod
    def from_coords(cls, predictors, coords, domains, space: SpaceDescriptor):
        """Construct directly from response coordinate rows (no element checks)."""
        self = cls.__new__(cls)
        self._init(predictors, np.asarray(coords, dtype=float), domains, space)
        return self

    def _init(self, predictors, coords, domains, space):
        self.domains = [d if isinstance(d, Domain) else Domain(tuple(d)) for d in domains]
        self.d = len(self.domains)
        if len(predictors) != self.d:
            raise InvariantError("one predictor array per domain is required")
        n = coords.shape[0]
        self.predictors = []
        for j, x in enumerate(predictors):
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape != (n, self.domains[j].ndim):
                raise InvariantError(
                    f"predictor {j} must have shape ({n}, {self.domains[j].ndim})"
                )
            self.predictors.append(x)
        self.space = space
        self.response_coords = coords
        self.n = n
        self.in_domain = np.all(
            [self.domains[j].contains(self.predictors[j]) for j in range(self.d)], axis=0
        )
        if not np.any(self.in_domain):
            raise InvariantError("no observation falls inside the estimation domain D")

    @property
    def responses(self):
        space = self.space
        return [HilbertElement(space, space.from_coords(c)) for c in self.response_coords]

    def subset(self, index) -> "RegressionData":
        """Row subset (used by cross-validation)."""
        return RegressionData.from_coords(
            [x[index] for x in self.predictors],
            self.response_coords[index],
            self.domains,
            self.space,
        )


def default_grids(domains, nodes_per_axis=None) -> list[GridSpec]:
    if nodes_per_axis is None:
        return [GridSpec.for_domain(d) for d in domains]
    if np.isscalar(nodes_per_axis):
        nodes_per_axis = [nodes_per_axis] * len(domains)
    return [GridSpec.for_domain(d, m) for d, m in zip(domains, nodes_per_axis)]


def check_condition_a(data: RegressionData, grids, bandwidths) -> None:
    """Verify that every grid node has an in-domain observation within bandwidth."""
    for j in range(data.d):
        pts = data.predictors[j][data.in_domain]
        if pts.shape[0] == 0:
            raise ConditionAError(j, 0, grids[j].nodes[0], bandwidths[j])
        diff = grids[j].nodes[:, None, :] - pts[None, :, :]
        mind = np.sqrt(np.sum(diff**2, axis=2)).min(axis=1)
        bad = np.nonzero(mind >= bandwidths[j])[0]
        if bad.size:
            k = int(bad[0])
            raise ConditionAError(j, k, grids[j].nodes[k], bandwidths[j])


def condition_a_holds(data: RegressionData, grids, bandwidths) -> bool:
    try:
        check_condition_a(data, grids, bandwidths)
    except ConditionAError:
        return False
    return True


def coverage_radius(data: RegressionData, grid: GridSpec, j: int) -> float:
    """Largest distance from a grid node to the nearest in-domain observation.

    Condition (A) holds for predictor j exactly when the bandwidth exceeds
    this radius.
    """
    pts = data.predictors[j][data.in_domain]
    if pts.shape[0] == 0:
        return np.inf
    diff = grid.nodes[:, None, :] - pts[None, :, :]
    return float(np.sqrt(np.sum(diff**2, axis=2)).min(axis=1).max())


@dataclass
class DensityEstimates:
    """Kernel estimates of the domain-restricted design densities."""

    p0: float
    marginal: list[np.ndarray]                    # p_j on grid_j
    pair: dict[tuple[int, int], np.ndarray]       # (G_j, G_k) for all j != k
    grids: list[GridSpec]
    bandwidths: np.ndarray
    kernels: list[np.ndarray] = field(repr=False)  # (G_j, n_in) normalized columns
    in_domain: np.ndarray = field(repr=False)      # (n,) mask

    def verify(self, atol_marginal=1e-10, atol_pair=1e-9) -> None:
        """Check the quadrature identities the estimators must satisfy."""
        for j, grid in enumerate(self.grids):
            total = grid.integrate(self.marginal[j])
            if abs(total - 1.0) > atol_marginal:
                raise InvariantError(f"marginal density {j} integrates to {total!r}")
        for (j, k), pjk in self.pair.items():
            marg = pjk @ self.grids[k].weights
            if np.max(np.abs(marg - self.marginal[j])) > atol_pair:
                raise InvariantError(f"pair density ({j},{k}) does not marginalize to {j}")


def estimate_densities(data: RegressionData, grids, bandwidths,
                       kernel_cache: dict | None = None) -> DensityEstimates:
    """Kernel estimators of ``p0``, the marginals ``p_j`` and the pairs ``p_jk``.

    ``kernel_cache`` (keyed by ``(j, h)``) lets repeated fits on the same data
    reuse normalized kernel matrices, as in bandwidth selection.
    """
    bandwidths = np.asarray(bandwidths, dtype=float)
    if bandwidths.shape != (data.d,):
        raise InvariantError(f"need {data.d} bandwidths, got {bandwidths.shape}")
    check_condition_a(data, grids, bandwidths)
    in_d = data.in_domain
    n = data.n
    n_in = int(in_d.sum())
    p0 = n_in / n
    if p0 <= 0.0:
        raise InvariantError("no observation in D")
    kernels = []
    for j in range(data.d):
        key = (j, float(bandwidths[j]))
        if kernel_cache is not None and key in kernel_cache:
            kernels.append(kernel_cache[key])
            continue
        mat = kernel_matrix(data.domains[j], grids[j], data.predictors[j][in_d], bandwidths[j])
        if kernel_cache is not None:
            kernel_cache[key] = mat
        kernels.append(mat)
    marginal = [k.sum(axis=1) / (p0 * n) for k in kernels]
    for j, pj in enumerate(marginal):
        low = np.nonzero(pj < MARGINAL_DENSITY_FLOOR)[0]
        if low.size:
            k = int(low[0])
            raise ConditionAError(j, k, grids[j].nodes[k], bandwidths[j])
    pair = {}
    for j in range(data.d):
        for k in range(data.d):
            if j != k:
                pair[(j, k)] = (kernels[j] @ kernels[k].T) / (p0 * n)
    return DensityEstimates(p0, marginal, pair, list(grids), bandwidths, kernels, in_d)


@dataclass
class SbfFit:
    """A fitted additive model.

    ``component_coords[j]`` holds the coordinate rows of the j-th component map
    at the grid nodes; ``weights[j]`` (when computed) holds the representation
    ``f_j(x) = (+)_i w_j[i][x] (.) Y_i``.
    """

    space: SpaceDescriptor
    domains: list[Domain]
    grids: list[GridSpec]
    bandwidths: np.ndarray
    f0_coords: np.ndarray
    component_coords: list[np.ndarray]
    densities: DensityEstimates | None
    iterations: int
    converged: bool
    deltas: list[float]
    residual: float
    centering: list[float]
    weights: list[np.ndarray] | None = None
    response_coords: np.ndarray | None = field(default=None, repr=False)

    @property
    def f0(self) -> HilbertElement:
        return HilbertElement(self.space, self.space.from_coords(self.f0_coords))

    @property
    def d(self) -> int:
        return len(self.domains)


def _interp_weights(grid: GridSpec, points: np.ndarray):
    """Multilinear interpolation stencil: corner flat-indices and weights.

    Returns (idx, wts) of shapes (n_pts, 2^L): gather ``values[idx]`` weighted
    by ``wts`` to interpolate node values at the points.  Exact at grid nodes.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    npts, ndim = pts.shape
    lo_idx, frac = [], []
    for l, ax in enumerate(grid.axes):
        i = np.searchsorted(ax, pts[:, l], side="right") - 1
        i = np.clip(i, 0, len(ax) - 2)
        t = (pts[:, l] - ax[i]) / (ax[i + 1] - ax[i])
        lo_idx.append(i)
        frac.append(np.clip(t, 0.0, 1.0))
    corners = 1 << ndim
    idx = np.empty((npts, corners), dtype=np.intp)
    wts = np.ones((npts, corners))
    for c in range(corners):
        multi = []
        w = np.ones(npts)
        for l in range(ndim):
            hi = (c >> l) & 1
            multi.append(lo_idx[l] + hi)
            w = w * (frac[l] if hi else 1.0 - frac[l])
        idx[:, c] = np.ravel_multi_index(multi, grid.shape)
        wts[:, c] = w
    return idx, wts


def interpolate_grid_values(grid: GridSpec, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Interpolate rows of ``values`` (grid.size, m) at the points -> (n_pts, m)."""
    idx, wts = _interp_weights(grid, points)
    return np.einsum("pc,pcm->pm", wts, np.asarray(values)[idx])


def fit(
    data: RegressionData,
    bandwidths,
    grids=None,
    *,
    tol: float = 1e-4,
    max_iter: int = 50,
    init: str = "smoother",
    compute_weights: bool = True,
    densities: DensityEstimates | None = None,
    kernel_cache: dict | None = None,
) -> SbfFit:
    """Smooth backfitting fit of the additive model on the grids.

    The iteration stops once the maximum over components of the squared L2
    change between sweeps falls below ``tol`` and the sup-norm fixed-point
    residual falls below ``10 * tol``; the returned fit always satisfies the
    empirical centering constraints.

    ``init`` is either ``"smoother"`` (the constrained marginal-smoother start,
    the default) or ``"zero"``.
    """
    if grids is None:
        grids = default_grids(data.domains)
    if densities is None:
        densities = estimate_densities(data, grids, bandwidths, kernel_cache=kernel_cache)
    bandwidths = densities.bandwidths
    d = data.d
    in_d = data.in_domain
    n = data.n
    p0 = densities.p0
    omega = data.space.coord_weights
    c_in = data.response_coords[in_d]

    f0_coords = c_in.sum(axis=0) / (p0 * n)
    # base_j = m_j - f0 in coordinates; same object in weight form.
    base = []
    for j in range(d):
        kj = densities.kernels[j]
        pj = densities.marginal[j]
        base.append((kj @ c_in) / (pj * p0 * n)[:, None] - f0_coords[None, :])

    # transfer[j][k] maps node values of component k to the integral term in
    # equation j: rows are grid-j nodes.
    transfer = [dict() for _ in range(d)]
    for (j, k), pjk in densities.pair.items():
        transfer[j][k] = pjk * grids[k].weights[None, :] / densities.marginal[j][:, None]

    def sweep(state, rhs):
        for j in range(d):
            acc = rhs[j].copy()
            for k in range(d):
                if k != j:
                    acc -= transfer[j][k] @ state[k]
            state[j] = acc

    def run(rhs, n_sweeps):
        state = [r.copy() for r in rhs] if init == "smoother" else [np.zeros_like(r) for r in rhs]
        for _ in range(n_sweeps):
            sweep(state, rhs)
        return state

    if init not in ("smoother", "zero"):
        raise InvariantError(f"unknown init {init!r}")

    comp = [b.copy() for b in base] if init == "smoother" else [np.zeros_like(b) for b in base]
    deltas = []
    residual = np.inf
    converged = False
    iterations = 0
    for _ in range(max_iter):
        prev = [f.copy() for f in comp]
        sweep(comp, base)
        iterations += 1
        delta = 0.0
        for j in range(d):
            diff = comp[j] - prev[j]
            delta = max(delta, float(grids[j].weights @ ((diff * diff) @ omega)))
        deltas.append(delta)
        if delta < tol:
            residual = _residual_sup(comp, base, transfer, omega, d)
            if residual < 10.0 * tol or d == 1:
                converged = True
                break
    if not converged:
        residual = _residual_sup(comp, base, transfer, omega, d)
        last = f"{deltas[-1]:.3e}" if deltas else "n/a"
        raise ConvergenceError(
            f"SBF did not converge in {max_iter} iterations "
            f"(last delta {last}, residual {residual:.3e})",
            diagnostics={"deltas": deltas, "residual": residual},
        )

    centering = []
    for j in range(d):
        cvec = (grids[j].weights * densities.marginal[j]) @ comp[j]
        centering.append(float(np.sqrt(np.dot(omega, cvec**2))))

    weights = None
    if compute_weights:
        kern_base = [
            densities.kernels[j] / (densities.marginal[j] * p0 * n)[:, None] - 1.0 / (p0 * n)
            for j in range(d)
        ]
        w_state = run(kern_base, iterations)
        weights = []
        for j in range(d):
            full = np.zeros((n, grids[j].size))
            full[in_d] = w_state[j].T
            weights.append(full)

    return SbfFit(
        space=data.space,
        domains=data.domains,
        grids=list(grids),
        bandwidths=bandwidths,
        f0_coords=f0_coords,
        component_coords=comp,
        densities=densities,
        iterations=iterations,
        converged=converged,
        deltas=deltas,
        residual=residual,
        centering=centering,
        weights=weights,
        response_coords=data.response_coords,
    )


def _residual_sup(comp, base, transfer, omega, d):
    worst = 0.0
    for j in range(d):
        res = comp[j] - base[j]
        for k in range(d):
            if k != j:
                res += transfer[j][k] @ comp[k]
        worst = max(worst, float(np.sqrt(((res * res) @ omega).max())))
    return worst


def residual_norm(fit: SbfFit) -> float:
    """Sup-norm of the fixed-point residual of the estimated integral equations."""
    dens = fit.densities
    omega = fit.space.coord_weights
    in_d = dens.in_domain
    c_in = fit.response_coords[in_d]
    n = fit.response_coords.shape[0]
    base = []
    transfer = [dict() for _ in range(fit.d)]
    for j in range(fit.d):
        base.append(
            (dens.kernels[j] @ c_in) / (dens.marginal[j] * dens.p0 * n)[:, None]
            - fit.f0_coords[None, :]
        )
        for k in range(fit.d):
            if k != j:
                transfer[j][k] = (
                    dens.pair[(j, k)] * fit.grids[k].weights[None, :]
                    / dens.marginal[j][:, None]
                )
    return _residual_sup(fit.component_coords, base, transfer, omega, fit.d)


def evaluate_component(fit: SbfFit, j: int, x) -> HilbertElement:
    """The j-th component map at ``x`` (multilinear interpolation off the grid)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not fit.domains[j].contains(x):
        raise DomainError(f"point {x} outside domain {fit.domains[j].bounds}")
    coords = interpolate_grid_values(fit.grids[j], fit.component_coords[j], x[None, :])[0]
    return HilbertElement(fit.space, fit.space.from_coords(coords))


def _split_point(fit: SbfFit, x) -> list[np.ndarray]:
    if isinstance(x, (list, tuple)) and len(x) == fit.d and fit.d > 1:
        parts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in x]
    else:
        flat = np.atleast_1d(np.asarray(x, dtype=float))
        total = sum(dom.ndim for dom in fit.domains)
        if flat.size != total:
            raise DomainError(f"point has {flat.size} coordinates, model needs {total}")
        parts, pos = [], 0
        for dom in fit.domains:
            parts.append(flat[pos : pos + dom.ndim])
            pos += dom.ndim
    return parts


def predict_coords(fit: SbfFit, points: np.ndarray) -> np.ndarray:
    """Vectorized prediction in coordinates for rows of stacked predictor values."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.tile(fit.f0_coords, (pts.shape[0], 1))
    pos = 0
    for j, dom in enumerate(fit.domains):
        xj = pts[:, pos : pos + dom.ndim]
        out += interpolate_grid_values(fit.grids[j], fit.component_coords[j], xj)
        pos += dom.ndim
    return out


def predict(fit: SbfFit, x) -> HilbertElement:
    """The regression estimate ``f0 (+) (+)_j f_j(x_j)`` at an in-domain point."""
    parts = _split_point(fit, x)
    for j, part in enumerate(parts):
        if not fit.domains[j].contains(part):
            raise DomainError(f"coordinate {part} outside domain {fit.domains[j].bounds}")
    coords = predict_coords(fit, np.concatenate(parts)[None, :])[0]
    return HilbertElement(fit.space, fit.space.from_coords(coords))
