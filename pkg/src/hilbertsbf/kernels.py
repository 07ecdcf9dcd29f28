"""Estimation domains, tensor quadrature grids, and boundary-normalized kernels.

The kernel here is the local-constant building block of the backfitting
estimator: a compactly supported radial kernel rescaled so that its quadrature
integral over the estimation domain equals one for every data point, with a
constant fallback when the data point is too far from the domain for the
denominator to be positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvariantError

DEFAULT_NODES_1D = 41
DEFAULT_NODES_ND = 21

# Below this, the normalizing integral is treated as zero and the constant
# fallback column 1/|D| is used.
DENOMINATOR_FLOOR = 1e-14


@dataclass(frozen=True)
class Domain:
    """Compact box ``prod_l [lo_l, hi_l]`` in R^L."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise InvariantError("domain needs at least one axis")
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise InvariantError(f"domain bounds must be finite, got [{lo}, {hi}]")
            if not lo < hi:
                raise InvariantError(f"domain bounds must satisfy lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, points) -> np.ndarray:
        """Boolean mask of which points lie inside the box (boundary included)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.ndim:
            raise DomainError(f"points have dimension {pts.shape[1]}, domain has {self.ndim}")
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        return inside if np.ndim(points) > 1 else bool(inside[0])

    def to_json(self):
        return [[lo, hi] for lo, hi in self.bounds]

    @classmethod
    def from_json(cls, obj) -> "Domain":
        return cls(tuple((float(lo), float(hi)) for lo, hi in obj))


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product trapezoidal quadrature grid over a box domain.

    ``nodes`` has one row per grid point (C order over the axes) and
    ``weights`` are the matching tensor trapezoidal weights, summing to the
    box hypervolume.
    """

    shape: tuple[int, ...]
    axes: tuple[np.ndarray, ...]
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def for_domain(cls, domain: Domain, nodes_per_axis=None) -> "GridSpec":
        if nodes_per_axis is None:
            nodes_per_axis = DEFAULT_NODES_1D if domain.ndim == 1 else DEFAULT_NODES_ND
        if np.isscalar(nodes_per_axis):
            nodes_per_axis = [int(nodes_per_axis)] * domain.ndim
        if len(nodes_per_axis) != domain.ndim:
            raise InvariantError("nodes_per_axis length must match domain dimension")
        axes, axis_weights = [], []
        for (lo, hi), m in zip(domain.bounds, nodes_per_axis):
            if m < 2:
                raise InvariantError("grids need at least 2 nodes per axis")
            ax = np.linspace(lo, hi, m)
            step = (hi - lo) / (m - 1)
            w = np.full(m, step)
            w[0] = w[-1] = step / 2.0
            axes.append(ax)
            axis_weights.append(w)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        weights = axis_weights[0]
        for w in axis_weights[1:]:
            weights = np.multiply.outer(weights, w)
        weights = np.asarray(weights).ravel()
        return cls(tuple(nodes_per_axis), tuple(axes), nodes, weights)

    @classmethod
    def from_axes(cls, axes) -> "GridSpec":
        """Rebuild a tensor grid from per-axis node positions (trapezoid weights)."""
        axes = [np.asarray(ax, dtype=float) for ax in axes]
        axis_weights = []
        for ax in axes:
            if ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise InvariantError("grid axes must be strictly increasing with >= 2 nodes")
            w = np.zeros(ax.size)
            w[:-1] += 0.5 * np.diff(ax)
            w[1:] += 0.5 * np.diff(ax)
            axis_weights.append(w)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        weights = axis_weights[0]
        for w in axis_weights[1:]:
            weights = np.multiply.outer(weights, w)
        return cls(tuple(ax.size for ax in axes), tuple(axes), nodes,
                   np.asarray(weights).ravel())

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of node values against the grid weights."""
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def to_json(self):
        return {"shape": list(self.shape), "axes": [ax.tolist() for ax in self.axes]}


def biweight(t):
    """Biweight kernel ``(1 - t^2)^2`` on [0, 1], zero beyond, for t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvariantError("biweight argument must be nonnegative")
    out = np.where(t <= 1.0, (1.0 - t**2) ** 2, 0.0)
    return out if out.ndim else float(out)


def kernel_matrix(domain: Domain, grid: GridSpec, points, h: float) -> np.ndarray:
    """Boundary-normalized kernel columns for a batch of data points.

    Returns an array of shape ``(grid.size, n)``; column i is the normalized
    kernel in the grid nodes for data point i.  Each column integrates to one
    under the grid quadrature: either by construction (the denominator uses the
    same rule) or because the constant fallback 1/|D| is used when the
    denominator vanishes.
    """
    if h <= 0:
        raise InvariantError(f"bandwidth must be positive, got {h}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != domain.ndim:
        raise DomainError(f"points have dimension {pts.shape[1]}, domain has {domain.ndim}")
    # (grid.size, n) distances
    diff = grid.nodes[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    numer = h ** (-domain.ndim) * biweight(dist / h)
    denom = grid.weights @ numer
    cols = np.empty_like(numer)
    ok = denom > DENOMINATOR_FLOOR
    cols[:, ok] = numer[:, ok] / denom[ok]
    cols[:, ~ok] = 1.0 / domain.volume
    return cols


def normalized_kernel(domain: Domain, grid: GridSpec, point, h: float) -> np.ndarray:
    """Normalized kernel column for a single data point; shape ``(grid.size,)``."""
    return kernel_matrix(domain, grid, np.atleast_2d(np.asarray(point, dtype=float)), h)[:, 0]
