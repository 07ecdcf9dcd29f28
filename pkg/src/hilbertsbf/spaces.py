"""Separable-Hilbert-space arithmetic for every response/predictor geometry.

Four geometries are supported:

* ``EuclideanSpace(k)`` -- ordinary R^k;
* ``SimplexSpace(k)`` -- positive proportion vectors summing to one, with
  perturbation/powering as vector operations and the log-ratio inner product;
* ``BayesHilbertSpace(weights, nodes)`` -- positive densities discretized on a
  quadrature grid, same operations against the grid measure;
* ``L2GridSpace(weights, nodes, node_dim)`` -- square-integrable (vector-valued)
  functions on a quadrature grid with pointwise linear operations.

Every space exposes isometric linear coordinates (``to_coords``/``from_coords``,
the clr transform for the two log-ratio geometries, identity otherwise) with a
diagonal metric ``coord_weights``, so that downstream linear algebra never has
to know which geometry it is working in.  Elements are immutable values and all
operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError, NumericOverflowError, SpaceMismatchError

SIMPLEX_SUM_TOL = 1e-12
BAYES_SUM_TOL = 1e-10
CLR_MEAN_TOL = 1e-8
POSITIVITY_FLOOR = 1e-300


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


class SpaceDescriptor:
    """Common interface of the four geometries."""

    kind = "abstract"

    # subclasses set: dim (coefficient length), coord_dim, coord_weights

    def validate(self, coeffs: np.ndarray) -> None:
        raise NotImplementedError

    def to_coords(self, coeffs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def from_coords(self, coords: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_coeffs(self) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def coord_norm(self, coords: np.ndarray) -> float:
        """Norm of a coordinate vector under the diagonal metric."""
        return float(np.sqrt(np.dot(self.coord_weights, np.asarray(coords) ** 2)))


@dataclass(frozen=True, eq=False)
class EuclideanSpace(SpaceDescriptor):
    dim: int
    kind = "euclidean"

    def __post_init__(self):
        if self.dim < 1:
            raise InvariantError("Euclidean dimension must be >= 1")

    @property
    def coord_dim(self):
        return self.dim

    @property
    def coord_weights(self):
        return np.ones(self.dim)

    def validate(self, coeffs):
        if coeffs.shape != (self.dim,):
            raise InvariantError(f"expected {self.dim} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvariantError("coefficients must be finite")

    def to_coords(self, coeffs):
        return np.asarray(coeffs, dtype=float)

    def from_coords(self, coords):
        return np.asarray(coords, dtype=float)

    def zero_coeffs(self):
        return np.zeros(self.dim)

    def __eq__(self, other):
        return isinstance(other, EuclideanSpace) and other.dim == self.dim

    def __hash__(self):
        return hash(("euclidean", self.dim))

    def to_json(self):
        return {"kind": "euclidean", "dim": self.dim}


class _LogRatioSpace(SpaceDescriptor):
    """Shared clr machinery for the simplex and Bayes-Hilbert geometries.

    ``measure_weights`` is the quadrature measure of the underlying space
    (all ones for the simplex, where the measure is counting measure).
    """

    @property
    def measure_weights(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measure_weights))

    @property
    def coord_weights(self):
        return self.measure_weights

    def _check_positive(self, coeffs):
        if np.any(~np.isfinite(coeffs)) or np.any(coeffs < POSITIVITY_FLOOR):
            raise InvariantError(
                "density/proportion values must be finite and strictly positive "
                f"(floor {POSITIVITY_FLOOR})"
            )

    def _mass(self, coeffs) -> float:
        return float(np.dot(self.measure_weights, coeffs))

    def to_coords(self, coeffs):
        logs = np.log(coeffs)
        mean = np.dot(self.measure_weights, logs) / self.total_measure
        return logs - mean

    def from_coords(self, coords, check_mean=True):
        coords = np.asarray(coords, dtype=float)
        if check_mean:
            mean = np.dot(self.measure_weights, coords) / self.total_measure
            if abs(mean) > CLR_MEAN_TOL:
                raise InvariantError(
                    f"clr coordinates must have weighted mean zero (got {mean:.3e})"
                )
        shifted = coords - np.max(coords)
        raw = np.exp(shifted)
        mass = self._mass(raw)
        if mass <= 0 or not np.isfinite(mass):
            raise NumericOverflowError("exponentiation overflow while leaving clr coordinates")
        out = raw / mass
        if np.any(out < POSITIVITY_FLOOR):
            raise NumericOverflowError(
                "power/perturbation result underflowed the positivity floor"
            )
        return out

    def zero_coeffs(self):
        return np.full(len(self.measure_weights), 1.0 / self.total_measure)


@dataclass(frozen=True, eq=False)
class SimplexSpace(_LogRatioSpace):
    dim: int
    kind = "simplex"

    def __post_init__(self):
        if self.dim < 2:
            raise InvariantError("simplex dimension must be >= 2")

    @property
    def coord_dim(self):
        return self.dim

    @property
    def measure_weights(self):
        return np.ones(self.dim)

    def validate(self, coeffs):
        if coeffs.shape != (self.dim,):
            raise InvariantError(f"expected {self.dim} proportions, got {coeffs.shape}")
        self._check_positive(coeffs)
        if abs(float(np.sum(coeffs)) - 1.0) > SIMPLEX_SUM_TOL:
            raise InvariantError(
                f"proportions must sum to 1 within {SIMPLEX_SUM_TOL}, got {np.sum(coeffs)!r}"
            )

    def __eq__(self, other):
        return isinstance(other, SimplexSpace) and other.dim == self.dim

    def __hash__(self):
        return hash(("simplex", self.dim))

    def to_json(self):
        return {"kind": "simplex", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class BayesHilbertSpace(_LogRatioSpace):
    """Positive densities on a quadrature grid with total mass one.

    ``nodes`` records where the grid values live (angles, box points, unit
    vectors); it is carried for reconstruction, sampling and plotting but does
    not enter the arithmetic, which only needs the measure weights.
    """

    weights: np.ndarray = field(repr=False)
    nodes: np.ndarray | None = field(default=None, repr=False)
    kind = "bayes_hilbert"

    def __post_init__(self):
        w = _readonly(self.weights)
        if w.ndim != 1 or w.size < 2:
            raise InvariantError("Bayes-Hilbert grids need at least 2 nodes")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise InvariantError("measure weights must be strictly positive and finite")
        object.__setattr__(self, "weights", w)
        if self.nodes is not None:
            nodes = _readonly(self.nodes)
            if nodes.shape[0] != w.size:
                raise InvariantError("nodes/weights length mismatch")
            object.__setattr__(self, "nodes", nodes)

    @property
    def dim(self):
        return self.weights.size

    @property
    def coord_dim(self):
        return self.weights.size

    @property
    def measure_weights(self):
        return self.weights

    def validate(self, coeffs):
        if coeffs.shape != (self.dim,):
            raise InvariantError(f"expected {self.dim} grid values, got {coeffs.shape}")
        self._check_positive(coeffs)
        mass = self._mass(coeffs)
        if abs(mass - 1.0) > BAYES_SUM_TOL:
            raise InvariantError(
                f"density must integrate to 1 within {BAYES_SUM_TOL}, got {mass!r}"
            )

    def __eq__(self, other):
        if not isinstance(other, BayesHilbertSpace):
            return False
        if not np.array_equal(other.weights, self.weights):
            return False
        if (self.nodes is None) != (other.nodes is None):
            return False
        return self.nodes is None or np.array_equal(other.nodes, self.nodes)

    def __hash__(self):
        return hash(("bayes_hilbert", self.weights.tobytes()))

    def to_json(self):
        return {
            "kind": "bayes_hilbert",
            "weights": self.weights.tolist(),
            "nodes": None if self.nodes is None else self.nodes.tolist(),
        }


@dataclass(frozen=True, eq=False)
class L2GridSpace(SpaceDescriptor):
    """Functions on a quadrature grid, possibly vector-valued at each node.

    Coefficients are the node values flattened row-major, so an element has
    ``len(weights) * node_dim`` coefficients.  Used both for scalar functional
    data (``node_dim=1``) and for tangent vector fields along a curve
    (``node_dim=`` ambient dimension).
    """

    weights: np.ndarray = field(repr=False)
    nodes: np.ndarray | None = field(default=None, repr=False)
    node_dim: int = 1
    kind = "l2_grid"

    def __post_init__(self):
        w = _readonly(self.weights)
        if w.ndim != 1 or w.size < 2:
            raise InvariantError("L2 grids need at least 2 nodes")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InvariantError("measure weights must be nonnegative and finite")
        if self.node_dim < 1:
            raise InvariantError("node_dim must be >= 1")
        object.__setattr__(self, "weights", w)
        if self.nodes is not None:
            nodes = _readonly(self.nodes)
            if nodes.shape[0] != w.size:
                raise InvariantError("nodes/weights length mismatch")
            object.__setattr__(self, "nodes", nodes)

    @property
    def dim(self):
        return self.weights.size * self.node_dim

    @property
    def coord_dim(self):
        return self.dim

    @property
    def coord_weights(self):
        return np.repeat(self.weights, self.node_dim)

    def validate(self, coeffs):
        if coeffs.shape != (self.dim,):
            raise InvariantError(f"expected {self.dim} grid values, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvariantError("coefficients must be finite")

    def to_coords(self, coeffs):
        return np.asarray(coeffs, dtype=float)

    def from_coords(self, coords):
        return np.asarray(coords, dtype=float)

    def zero_coeffs(self):
        return np.zeros(self.dim)

    def __eq__(self, other):
        if not isinstance(other, L2GridSpace) or other.node_dim != self.node_dim:
            return False
        return np.array_equal(other.weights, self.weights)

    def __hash__(self):
        return hash(("l2_grid", self.node_dim, self.weights.tobytes()))

    def to_json(self):
        return {
            "kind": "l2_grid",
            "weights": self.weights.tolist(),
            "nodes": None if self.nodes is None else self.nodes.tolist(),
            "node_dim": self.node_dim,
        }


def space_from_json(obj: dict) -> SpaceDescriptor:
    kind = obj.get("kind")
    if kind == "euclidean":
        return EuclideanSpace(int(obj["dim"]))
    if kind == "simplex":
        return SimplexSpace(int(obj["dim"]))
    if kind == "bayes_hilbert":
        nodes = obj.get("nodes")
        return BayesHilbertSpace(
            np.asarray(obj["weights"], dtype=float),
            None if nodes is None else np.asarray(nodes, dtype=float),
        )
    if kind == "l2_grid":
        nodes = obj.get("nodes")
        return L2GridSpace(
            np.asarray(obj["weights"], dtype=float),
            None if nodes is None else np.asarray(nodes, dtype=float),
            int(obj.get("node_dim", 1)),
        )
    raise InvariantError(f"unknown space kind {kind!r}")


@dataclass(frozen=True)
class HilbertElement:
    """A coefficient vector tied to its space descriptor."""

    space: SpaceDescriptor
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = _readonly(self.coeffs)
        self.space.validate(coeffs)
        object.__setattr__(self, "coeffs", coeffs)

    def to_json(self) -> dict:
        # Densities are stored as grid values, never as clr coordinates.
        return {"space": self.space.to_json(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "HilbertElement":
        return cls(space_from_json(obj["space"]), np.asarray(obj["coeffs"], dtype=float))


def zero(space: SpaceDescriptor) -> HilbertElement:
    """The zero vector of the space (uniform density for log-ratio spaces)."""
    return HilbertElement(space, space.zero_coeffs())


def _require_same_space(v: HilbertElement, w: HilbertElement) -> None:
    if v.space != w.space:
        raise SpaceMismatchError(f"space mismatch: {v.space!r} vs {w.space!r}")


def combine(a: float, v: HilbertElement, b: float, w: HilbertElement) -> HilbertElement:
    """The linear combination ``a (.) v (+) b (.) w`` in the space's geometry."""
    _require_same_space(v, w)
    space = v.space
    coords = a * space.to_coords(v.coeffs) + b * space.to_coords(w.coeffs)
    return HilbertElement(space, space.from_coords(coords))


def add(v: HilbertElement, w: HilbertElement) -> HilbertElement:
    return combine(1.0, v, 1.0, w)


def subtract(v: HilbertElement, w: HilbertElement) -> HilbertElement:
    return combine(1.0, v, -1.0, w)


def scale(a: float, v: HilbertElement) -> HilbertElement:
    return combine(a, v, 0.0, v)


def inner(v: HilbertElement, w: HilbertElement) -> float:
    """Inner product; for log-ratio spaces this is the weighted clr dot product,
    which equals the double log-ratio integral formula."""
    _require_same_space(v, w)
    space = v.space
    cv = space.to_coords(v.coeffs)
    cw = space.to_coords(w.coeffs)
    return float(np.dot(space.coord_weights, cv * cw))


def norm(v: HilbertElement) -> float:
    return float(np.sqrt(max(inner(v, v), 0.0)))


def distance(v: HilbertElement, w: HilbertElement) -> float:
    return norm(subtract(v, w))


def clr(v: HilbertElement) -> np.ndarray:
    """Centered log-ratio coordinates of a simplex or Bayes-Hilbert element."""
    if not isinstance(v.space, _LogRatioSpace):
        raise InvariantError("clr is defined for simplex and Bayes-Hilbert elements only")
    return v.space.to_coords(v.coeffs)


def clr_inv(coords, space: SpaceDescriptor) -> HilbertElement:
    """Inverse clr: coordinates (weighted mean zero) back to a positive element."""
    if not isinstance(space, _LogRatioSpace):
        raise InvariantError("clr_inv is defined for simplex and Bayes-Hilbert spaces only")
    return HilbertElement(space, space.from_coords(np.asarray(coords, dtype=float)))


def mean(elements) -> HilbertElement:
    """Hilbertian sample mean ``(1/n) (.) (+)_i v_i``."""
    elements = list(elements)
    if not elements:
        raise InvariantError("mean of an empty collection is undefined")
    space = elements[0].space
    for v in elements[1:]:
        _require_same_space(elements[0], v)
    coords = np.mean([space.to_coords(v.coeffs) for v in elements], axis=0)
    return HilbertElement(space, space.from_coords(coords))


def coords_matrix(elements) -> np.ndarray:
    """Stacked coordinate vectors, one row per element."""
    elements = list(elements)
    if not elements:
        raise InvariantError("no elements given")
    space = elements[0].space
    for v in elements[1:]:
        _require_same_space(elements[0], v)
    return np.vstack([space.to_coords(v.coeffs) for v in elements])


def elements_from_coords(space: SpaceDescriptor, coords: np.ndarray):
    """Inverse of :func:`coords_matrix` (rows back to elements)."""
    return [HilbertElement(space, space.from_coords(row)) for row in np.atleast_2d(coords)]
