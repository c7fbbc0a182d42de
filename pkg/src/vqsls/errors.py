"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands disagree on qubit, orbital, or parameter count."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedReferenceError(ValueError):
    """Only closed-shell restricted references are handled."""


class ResourceError(RuntimeError):
    """Requested problem size exceeds a dense-simulation guard."""


class EvaluationError(RuntimeError):
    """A cost function returned a non-finite value."""


class NonConvergenceError(RuntimeError):
    """Iteration cap reached; ``best_x``/``best_f`` hold the best point seen."""

    def __init__(self, message, best_x=None, best_f=None, n_calls=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_f = best_f
        self.n_calls = n_calls


class EmptyDirectionsError(RuntimeError):
    """Every Hessian eigendirection was rejected."""


class InfeasibleWindowError(RuntimeError):
    """No window on the search grid meets the requested accuracy."""

    def __init__(self, message, frontier=None):
        super().__init__(message)
        self.frontier = frontier


class WindowEdgeError(RuntimeError):
    """Fitted polynomial has no interior minimum inside the sampled window."""

    def __init__(self, message, x_edge, e_edge=None):
        super().__init__(message)
        self.x_edge = x_edge
        self.e_edge = e_edge
