"""Exception hierarchy shared by the solver modules."""


class StefanCHError(Exception):
    """Base class for all package errors."""


class DomainError(StefanCHError, ValueError):
    """Argument lies outside the effective domain of a convex primitive."""


class InteriorityError(StefanCHError, ValueError):
    """Initial mean is not interior to the domain of the graph."""


class DimensionMismatch(StefanCHError, ValueError):
    """Field sizes do not match the mesh."""


class NonZeroMean(StefanCHError, ValueError):
    """A field required to have zero mean does not."""


class IncompatibleRHS(StefanCHError, ValueError):
    """Right-hand side does not annihilate constants."""


class SolverFailure(StefanCHError, RuntimeError):
    """Linear solver breakdown."""


class NewtonDivergence(StefanCHError, RuntimeError):
    """Nonlinear iteration failed to reduce the residual."""


class StepRejected(StefanCHError, RuntimeError):
    """A time step could not be completed; carries a suggested step size."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class InconsistentState(StefanCHError, RuntimeError):
    """Operation needs data the state does not carry yet."""


class GraphMismatch(StefanCHError, ValueError):
    """Operation is defined only for a different graph family."""


class MeanMismatch(StefanCHError, ValueError):
    """Two data sets that must share an initial mean do not."""


class ConfigError(StefanCHError, ValueError):
    """Invalid configuration value; names the offending key and line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"{key}"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
