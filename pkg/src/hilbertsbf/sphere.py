"""Embedded unit-sphere geometry and tangent-field plumbing.

Points live extrinsically in R^{q+1}; tangent vectors are ambient vectors
orthogonal to their base point.  All maps (exponential, logarithm, parallel
transport along minimizing geodesics) are closed form, which keeps the
functions pure and the tests exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, CutLocusError, InvariantError
from .spaces import L2GridSpace

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10
ANTIPODAL_TOL = 1e-9
FRECHET_TOL = 1e-10
FRECHET_GRAD_TOL = 1e-8
FRECHET_MAX_ITER = 200
HEMISPHERE_MARGIN = 1e-6


def _check_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise InvariantError("sphere points are vectors in R^{q+1} with q >= 1")
    if abs(np.linalg.norm(p) - 1.0) > UNIT_TOL:
        raise InvariantError(f"point is not on the unit sphere: |norm - 1| = "
                             f"{abs(np.linalg.norm(p) - 1.0):.3e}")
    return p


def _check_tangent(p: np.ndarray, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != p.shape:
        raise InvariantError("tangent vector and base point must have equal dimension")
    if abs(float(np.dot(p, v))) > TANGENT_TOL * max(1.0, np.linalg.norm(v)):
        raise InvariantError(
            f"vector is not tangent at its base point: <p, v> = {np.dot(p, v):.3e}"
        )
    return v


def sphere_exp(p, v) -> np.ndarray:
    """Riemannian exponential map: follow the geodesic from p with velocity v."""
    p = _check_point(p)
    v = _check_tangent(p, v)
    r = np.linalg.norm(v)
    if r == 0.0:
        return p.copy()
    q = np.cos(r) * p + np.sin(r) * (v / r)
    return q / np.linalg.norm(q)


def sphere_log(p, q) -> np.ndarray:
    """Riemannian logarithm at p; requires q off the cut locus of p ({-p})."""
    p = _check_point(p)
    q = _check_point(q)
    c = float(np.dot(p, q))
    if c <= -1.0 + ANTIPODAL_TOL:
        raise CutLocusError("logarithm undefined: points are (numerically) antipodal")
    c = min(c, 1.0)
    u = q - c * p
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return np.zeros_like(p)
    return np.arccos(c) * (u / nu)


def geodesic_distance(p, q) -> float:
    p = _check_point(p)
    q = _check_point(q)
    return float(np.arccos(np.clip(np.dot(p, q), -1.0, 1.0)))


def parallel_transport(p, q, v) -> np.ndarray:
    """Transport tangent vector v from p to q along the minimizing geodesic."""
    p = _check_point(p)
    q = _check_point(q)
    v = _check_tangent(p, v)
    c = float(np.dot(p, q))
    if c <= -1.0 + ANTIPODAL_TOL:
        raise CutLocusError("parallel transport undefined for antipodal points")
    u = sphere_log(p, q)
    d = np.linalg.norm(u)
    if d < 1e-15:
        return v.copy()
    e = u / d
    a = float(np.dot(v, e))
    return v - a * e + a * (np.cos(d) * e - np.sin(d) * p)


def frechet_mean(points, tol: float = FRECHET_TOL, max_iter: int = FRECHET_MAX_ITER) -> np.ndarray:
    """Intrinsic (Frechet) sample mean of points in an open geodesic hemisphere.

    Fixed-point iteration: move the candidate along the mean of the logarithms
    until the update is below ``tol``; the first-order condition (mean log norm
    below 1e-8) is verified before returning.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise InvariantError("frechet_mean needs at least one point")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InvariantError("all points must lie on the unit sphere")
    gram = np.clip(pts @ pts.T, -1.0, 1.0)
    if np.arccos(gram).max() >= np.pi - HEMISPHERE_MARGIN:
        raise InvariantError("points are not contained in an open geodesic hemisphere")
    mu = pts.mean(axis=0)
    nmu = np.linalg.norm(mu)
    if nmu < 1e-12:
        raise ConvergenceError("degenerate initialization: Euclidean mean is ~0")
    mu = mu / nmu
    for _ in range(max_iter):
        grad = _mean_log(mu, pts)
        step = np.linalg.norm(grad)
        if step < tol:
            break
        mu = sphere_exp(mu, grad)
    else:
        raise ConvergenceError(
            f"Frechet mean did not converge in {max_iter} iterations",
            diagnostics={"last_update": step},
        )
    if np.linalg.norm(_mean_log(mu, pts)) >= FRECHET_GRAD_TOL:
        raise ConvergenceError("Frechet mean first-order condition not met at return")
    return mu


def _mean_log(mu: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # Vectorized mean of Log_mu(points).
    c = np.clip(pts @ mu, -1.0, 1.0)
    if np.any(c <= -1.0 + ANTIPODAL_TOL):
        raise CutLocusError("a point is antipodal to the current mean iterate")
    u = pts - c[:, None] * mu[None, :]
    nu = np.linalg.norm(u, axis=1)
    scl = np.zeros_like(nu)
    ok = nu > 1e-15
    scl[ok] = np.arccos(c[ok]) / nu[ok]
    return (u * scl[:, None]).mean(axis=0)


def intrinsic_mean_curve(curves) -> np.ndarray:
    """Pointwise Frechet mean of sphere-valued curves on a shared time grid.

    ``curves`` has shape (n, T, q+1); returns the (T, q+1) mean curve.  A
    failure at any time point is re-raised with the failing index attached.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 3:
        raise InvariantError("curves must have shape (n, T, ambient_dim)")
    out = np.empty(curves.shape[1:])
    for t in range(curves.shape[1]):
        try:
            out[t] = frechet_mean(curves[:, t, :])
        except (InvariantError, ConvergenceError, CutLocusError) as exc:
            raise type(exc)(f"time index {t}: {exc}") from exc
    return out


@dataclass(frozen=True)
class TangentField:
    """A tangent vector field along a base curve on a time quadrature grid."""

    base: np.ndarray = field(repr=False)      # (T, q+1) unit vectors
    values: np.ndarray = field(repr=False)    # (T, q+1) tangent vectors
    weights: np.ndarray = field(repr=False)   # (T,) time quadrature weights

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if base.ndim != 2 or base.shape != values.shape or weights.shape != (base.shape[0],):
            raise InvariantError("base, values and weights have inconsistent shapes")
        if np.any(np.abs(np.linalg.norm(base, axis=1) - 1.0) > UNIT_TOL):
            raise InvariantError("base curve points must lie on the unit sphere")
        resid = np.abs(np.sum(base * values, axis=1))
        scale = np.maximum(1.0, np.linalg.norm(values, axis=1))
        if np.any(resid > TANGENT_TOL * scale):
            raise InvariantError("field values must be tangent to the base curve")
        for name, arr in (("base", base), ("values", values), ("weights", weights)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def space(self) -> L2GridSpace:
        """The tensor Hilbert space along the base curve, as an L2 grid space."""
        return L2GridSpace(self.weights, nodes=None, node_dim=self.base.shape[1])

    def coords(self) -> np.ndarray:
        return self.values.ravel()


def tensor_inner(v1: TangentField, v2: TangentField) -> float:
    """Inner product in the tensor Hilbert space along the shared base curve."""
    if v1.base.shape != v2.base.shape or not np.allclose(v1.base, v2.base, atol=1e-12):
        raise InvariantError("tangent fields must share the same base curve")
    if not np.array_equal(v1.weights, v2.weights):
        raise InvariantError("tangent fields must share the same time grid")
    return float(np.dot(v1.weights, np.sum(v1.values * v2.values, axis=1)))


def log_field(base_curve: np.ndarray, curve: np.ndarray, weights: np.ndarray) -> TangentField:
    """Logarithm of a sphere curve along a base curve, as a tangent field."""
    base_curve = np.asarray(base_curve, dtype=float)
    curve = np.asarray(curve, dtype=float)
    values = np.empty_like(curve)
    for t in range(curve.shape[0]):
        values[t] = sphere_log(base_curve[t], curve[t])
    return TangentField(base_curve, values, weights)


def sphere_volume_density(q: int, r) -> float | np.ndarray:
    """Volume density of the q-sphere at geodesic distance r: (sin r / r)^(q-1)."""
    if q < 1:
        raise InvariantError("sphere dimension must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r >= np.pi):
        raise InvariantError("geodesic distance must lie in [0, pi)")
    with np.errstate(invalid="ignore"):
        ratio = np.where(r > 0, np.sin(np.where(r > 0, r, 1.0)) / np.where(r > 0, r, 1.0), 1.0)
    out = ratio ** (q - 1)
    return out if out.ndim else float(out)


def circle_grid(size: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Uniform angular grid on the circle: angles in [0, 2pi) and weights."""
    if size < 2:
        raise InvariantError("circle grids need at least 2 nodes")
    angles = np.arange(size) * (2.0 * np.pi / size)
    weights = np.full(size, 2.0 * np.pi / size)
    return angles, weights


def sphere2_grid(n_lat: int = 48, n_lon: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """Latitude-longitude grid on the 2-sphere with sin-latitude weights.

    Returns unit vectors (n_lat * n_lon, 3) and quadrature weights summing to
    approximately 4 pi.  Colatitude uses interior midpoints so no node sits at
    the poles.
    """
    if n_lat < 2 or n_lon < 2:
        raise InvariantError("sphere grids need at least 2 nodes per axis")
    colat = (np.arange(n_lat) + 0.5) * (np.pi / n_lat)
    lon = np.arange(n_lon) * (2.0 * np.pi / n_lon)
    w_colat = np.sin(colat) * (np.pi / n_lat)
    w_lon = np.full(n_lon, 2.0 * np.pi / n_lon)
    cc, ll = np.meshgrid(colat, lon, indexing="ij")
    nodes = np.column_stack(
        [
            (np.sin(cc) * np.cos(ll)).ravel(),
            (np.sin(cc) * np.sin(ll)).ravel(),
            np.cos(cc).ravel(),
        ]
    )
    weights = np.multiply.outer(w_colat, w_lon).ravel()
    return nodes, weights


def angles_to_circle(angles) -> np.ndarray:
    """Embed circle angles as unit vectors in R^2."""
    angles = np.asarray(angles, dtype=float)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def circle_distance(a, b) -> np.ndarray:
    """Wrap-around geodesic distance between angles (broadcasting)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % (2.0 * np.pi)
    return np.minimum(d, 2.0 * np.pi - d)
