"""Exception types shared across the package.

Every error that the CLI maps to an exit code lives here so that the mapping
stays in one place.
"""


class HilbertSbfError(Exception):
    """Base class for all package errors."""


class SpaceMismatchError(HilbertSbfError, ValueError):
    """Two elements from different Hilbert spaces were combined."""


class InvariantError(HilbertSbfError, ValueError):
    """A domain-type invariant is violated (positivity, normalization, shape)."""


class NumericOverflowError(HilbertSbfError, ArithmeticError):
    """Exponentiation under/overflow produced a nonpositive density value."""


class DomainError(HilbertSbfError, ValueError):
    """A point lies outside the estimation domain."""


class CutLocusError(HilbertSbfError, ValueError):
    """Riemannian logarithm requested at (or too close to) the cut locus."""


class ConvergenceError(HilbertSbfError, RuntimeError):
    """An iterative routine failed to converge within its iteration budget."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConditionAError(HilbertSbfError, ValueError):
    """Some estimation-grid node has no in-domain observation within bandwidth.

    Carries the offending predictor index and grid node so callers can report
    exactly where coverage failed.
    """

    def __init__(self, j, node_index, node, bandwidth):
        self.j = j
        self.node_index = node_index
        self.node = node
        self.bandwidth = bandwidth
        super().__init__(
            f"condition (A) violated for predictor {j}: grid node {node_index} at "
            f"{node} has no in-domain observation within bandwidth {bandwidth}"
        )


class BandwidthTooSmallError(HilbertSbfError, ValueError):
    """A density reconstruction came out nonpositive at some grid node."""

    def __init__(self, node_index, node, bandwidth):
        self.node_index = node_index
        self.node = node
        self.bandwidth = bandwidth
        super().__init__(
            f"bandwidth {bandwidth} too small: reconstructed density vanishes at "
            f"grid node {node_index} ({node})"
        )


class ParseError(HilbertSbfError, ValueError):
    """An input file failed to parse; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
