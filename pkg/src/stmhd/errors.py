"""Exception types shared across the package."""


class StmhdError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StmhdError):
    """Invalid mesh, boundary-condition, or experiment configuration."""


class SingularMatrixError(StmhdError):
    """A factorization hit a zero pivot after pivoting."""


class BreakdownError(StmhdError):
    """NaN or Inf encountered inside the Arnoldi process."""


class PreconditionerError(StmhdError):
    """An inner solve of the preconditioner failed; carries the block name."""

    def __init__(self, block: str, message: str = ""):
        self.block = block
        super().__init__(f"preconditioner solve failed in block '{block}' {message}".strip())


class ConvergenceError(StmhdError):
    """A nonlinear solve did not reach its tolerance.

    For sequential time-stepping `step` identifies the failing time step
    (1-based); it is None for all-at-once solves.
    """

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)
