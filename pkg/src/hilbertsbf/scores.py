"""Dimension reduction producing score predictors from Hilbertian variables.

All eigen-solves go through n x n Gram matrices (snapshot method) or small
cross-covariance matrices in isometric coordinates, so the same code covers
Euclidean vectors, compositions, grid densities, functional data, and tangent
vector fields along a sphere curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError
from .spaces import HilbertElement, SpaceDescriptor, coords_matrix
from .sphere import TangentField, intrinsic_mean_curve, log_field

EIGENVALUE_FLOOR = 1e-12


@dataclass
class ScoreModel:
    """Centered basis, spectrum and per-observation scores.

    ``components`` holds one coordinate row per retained eigen-element;
    eigenvalues are the covariance-operator eigenvalues for PCA-type models
    and the squared singular values for cross-covariance models.
    """

    space: SpaceDescriptor
    mean_coords: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray = field(repr=False)     # (r, p) coordinate rows
    scores: np.ndarray = field(repr=False)         # (n, r)
    kind: str = "pca"
    sign_rule: str = "largest-loading-positive"

    @property
    def rank(self) -> int:
        return self.components.shape[0]

    @property
    def mean_element(self) -> HilbertElement:
        return HilbertElement(self.space, self.space.from_coords(self.mean_coords))

    def component_elements(self) -> list[HilbertElement]:
        return [
            HilbertElement(self.space, self.space.from_coords(row)) for row in self.components
        ]


def _fix_signs(components: np.ndarray, scores: np.ndarray):
    """Flip each eigen-element so its largest-|coordinate| loading is positive.

    Ties resolve to the first coordinate index, which makes repeated runs on
    identical input bitwise identical.
    """
    for r in range(components.shape[0]):
        lead = int(np.argmax(np.abs(components[r])))
        if components[r, lead] < 0:
            components[r] = -components[r]
            scores[:, r] = -scores[:, r]
    return components, scores


def _as_coords(x, space: SpaceDescriptor | None):
    if space is not None:
        return np.asarray(x, dtype=float), space
    x = list(x)
    return coords_matrix(x), x[0].space


def hpca(x, rank: int, *, space: SpaceDescriptor | None = None,
         divisor: str = "n-1", center: bool = True) -> ScoreModel:
    """Hilbertian principal component scores via the centered Gram matrix.

    ``x`` is a list of elements of one space (or a coordinate matrix when
    ``space`` is passed).  Eigen-elements are orthonormal; scores are the
    projections of the centered data onto them.
    """
    coords, space = _as_coords(x, space)
    n = coords.shape[0]
    if n < 2:
        raise InvariantError("PCA needs at least two observations")
    max_rank = min(n - 1 if center else n, space.coord_dim)
    if not 1 <= rank <= max_rank:
        raise InvariantError(f"rank must be in [1, {max_rank}], got {rank}")
    mean_coords = coords.mean(axis=0) if center else np.zeros(space.coord_dim)
    centered = coords - mean_coords
    omega = space.coord_weights
    denom = n - 1 if divisor == "n-1" else n
    gram = (centered * omega) @ centered.T / denom
    evals, evecs = np.linalg.eigh(gram)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    if evals[0] <= EIGENVALUE_FLOOR:
        raise InvariantError("degenerate sample: all observations are equal")
    evals = np.maximum(evals[:rank], 0.0)
    pos = np.maximum(evals, EIGENVALUE_FLOOR)
    components = (evecs[:, :rank].T @ centered) / np.sqrt(denom * pos)[:, None]
    scores = np.sqrt(denom * pos)[None, :] * evecs[:, :rank]
    scores = np.where(evals[None, :] > 0, scores, 0.0)
    components, scores = _fix_signs(components, scores)
    return ScoreModel(space, mean_coords, evals, components, scores, kind="pca")


def hsca(x, y, rank: int, *, x_space=None, y_space=None,
         divisor: str = "n-1", center_x: bool = True) -> ScoreModel:
    """Singular component scores of x against y.

    Eigen-decomposes the composed cross-covariance operator C_xy o C_yx on the
    x side; eigenvalues are the squared singular values.
    """
    xc, x_space = _as_coords(x, x_space)
    yc, y_space = _as_coords(y, y_space)
    n = xc.shape[0]
    if yc.shape[0] != n:
        raise InvariantError("x and y must have matched lengths")
    if n < 2:
        raise InvariantError("SCA needs at least two observations")
    if not 1 <= rank <= min(x_space.coord_dim, y_space.coord_dim, n):
        raise InvariantError(f"invalid rank {rank}")
    x_mean = xc.mean(axis=0) if center_x else np.zeros(x_space.coord_dim)
    xcent = xc - x_mean
    ycent = yc - yc.mean(axis=0)
    denom = n - 1 if divisor == "n-1" else n
    xt = xcent * np.sqrt(x_space.coord_weights)
    yt = ycent * np.sqrt(y_space.coord_weights)
    cross = yt.T @ xt / denom                     # C_yx in half-metric coordinates
    u, sv, vt = np.linalg.svd(cross, full_matrices=False)
    if sv[0] <= EIGENVALUE_FLOOR:
        raise InvariantError("degenerate cross-covariance: all singular values below 1e-12")
    sv = sv[:rank]
    components = vt[:rank] / np.sqrt(x_space.coord_weights)[None, :]
    scores = xt @ vt[:rank].T
    components, scores = _fix_signs(components.copy(), scores)
    return ScoreModel(x_space, x_mean, sv**2, components, scores, kind="sca")


def irfpc(curves, weights, rank: int, *, mean_curve=None) -> ScoreModel:
    """Intrinsic Riemannian functional PC scores of sphere-valued curves.

    ``curves`` has shape (n, T, q+1) on a shared time grid with quadrature
    ``weights``.  The curves are mapped to tangent fields along the intrinsic
    mean curve; the covariance operator uses divisor n and no extra centering
    (the log fields at the intrinsic mean average to zero by its first-order
    condition).
    """
    curves = np.asarray(curves, dtype=float)
    if mean_curve is None:
        mean_curve = intrinsic_mean_curve(curves)
    fields = [log_field(mean_curve, c, weights) for c in curves]
    space = fields[0].space()
    coords = np.vstack([f.coords() for f in fields])
    if not np.any(coords):
        # all curves coincide with the mean: the zero model is exact
        model = ScoreModel(
            space,
            np.zeros(space.coord_dim),
            np.zeros(rank),
            np.zeros((rank, space.coord_dim)),
            np.zeros((coords.shape[0], rank)),
            kind="irfpc",
        )
        return model, mean_curve
    model = hpca(coords, rank, space=space, divisor="n", center=False)
    model.kind = "irfpc"
    return model, mean_curve


def irsc(curves, weights, y, rank: int, *, y_space=None, mean_curve=None) -> ScoreModel:
    """Intrinsic Riemannian Hilbertian singular component scores.

    Tangent fields of the curve predictor against Hilbertian responses y;
    divisor n on the cross-covariance estimators, x side uncentered.
    """
    curves = np.asarray(curves, dtype=float)
    if mean_curve is None:
        mean_curve = intrinsic_mean_curve(curves)
    fields = [log_field(mean_curve, c, weights) for c in curves]
    space = fields[0].space()
    coords = np.vstack([f.coords() for f in fields])
    model = hsca(coords, y, rank, x_space=space, y_space=y_space,
                 divisor="n", center_x=False)
    model.kind = "irsc"
    return model, mean_curve


def tangent_component_fields(model: ScoreModel, mean_curve: np.ndarray) -> list[TangentField]:
    """Eigen-elements of an intrinsic score model as tangent fields."""
    t, k = mean_curve.shape
    return [
        TangentField(mean_curve, row.reshape(t, k), model.space.weights)
        for row in model.components
    ]


def variance_threshold_rank(eigenvalues, fraction: float = 0.95) -> int:
    """Smallest rank explaining the given fraction of total variance."""
    ev = np.asarray(eigenvalues, dtype=float)
    csum = np.cumsum(ev) / np.sum(ev)
    return int(np.searchsorted(csum, fraction) + 1)
