"""Exception hierarchy shared across the package."""


class AbreuError(Exception):
    """Base class for all errors raised by this package."""


class ResolutionTooCoarse(AbreuError):
    pass


class EmptyMask(AbreuError):
    pass


class QuadratureFailure(AbreuError):
    pass


class OutOfDomain(AbreuError):
    """Raised when a field leaves the barrier domain (det <= 0 or trace <= 0).

    ``node`` is the flat (row-major) index of the first offending node.
    """

    def __init__(self, node, det=None):
        self.node = int(node)
        self.det = det
        super().__init__(f"discrete Hessian not positive definite at node {self.node} (det={det})")


class SolverError(AbreuError):
    eps = None


class MaxIters(SolverError):
    pass


class LineSearchStall(SolverError):
    pass


class StartFailure(SolverError):
    pass


class InsufficientData(AbreuError):
    pass


class ParseError(AbreuError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(AbreuError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
