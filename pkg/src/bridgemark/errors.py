"""Exception types shared across the package."""


class BridgemarkError(Exception):
    """Base class for all package errors."""


class DomainError(BridgemarkError):
    """An argument is outside the mathematical domain of an operation."""


class AlignmentError(BridgemarkError):
    """Procrustes alignment is not defined for the given shapes."""


class SimulationBlowup(BridgemarkError):
    """A simulated state became non-finite.

    Carries the index of the failing step so the caller can locate the
    offending time node.
    """

    def __init__(self, step_index: int, message: str = ""):
        self.step_index = step_index
        super().__init__(message or f"non-finite state at step {step_index}")


class TrainingDiverged(BridgemarkError):
    """The score-matching loss became non-finite during training."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class EstimationError(BridgemarkError):
    """The likelihood estimator could not produce a finite value."""


class ConfigError(BridgemarkError):
    """An experiment configuration file is malformed or inconsistent."""
