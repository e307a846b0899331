"""Exception types shared across the package."""


class SparseCSError(Exception):
    """Base class for all package errors."""


class NonIntegerDegree(SparseCSError):
    """Ensemble parameters imply a fractional row or column degree."""


class InfeasibleGraph(SparseCSError):
    """A simple bi-regular bipartite graph with the requested degrees cannot
    be realized (or the swap-repair budget was exhausted)."""


class WindowTooSmall(SparseCSError):
    """A striped column must place more elements than its diagonal window
    has admissible rows."""


class SizeLimit(SparseCSError):
    """Requested dense matrix exceeds the configured edge budget."""


class ParseError(SparseCSError):
    """Malformed matrix/signal text; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionMismatch(SparseCSError):
    """Shapes of matrix, signal or measurement do not agree."""


class SupportFull(SparseCSError):
    """densify asked for more new nonzeros than there are zero entries."""


class InvalidPrior(SparseCSError):
    """Prior parameters outside their domain (e.g. sigma^2 <= 0 with rho > 0)."""


class GridExhausted(SparseCSError):
    """No grid point satisfied the search predicate."""


class NeverRecovered(SparseCSError):
    """Even the sparsest starting signal of the threshold protocol failed."""


class FitDegenerate(SparseCSError):
    """Scaling fit input carries no usable variation."""
