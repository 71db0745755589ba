"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Malformed or unreadable run configuration."""


class HypothesisError(ConfigError):
    """Input data violates one of the standing assumptions on the model data.

    ``tag`` names the violated assumption (``"porosity"``,
    ``"dispersion-ellipticity"``, ...) and is prefixed to the message.
    """

    def __init__(self, tag: str, message: str):
        self.tag = tag
        super().__init__(f"[{tag}] {message}")


class SolverError(RuntimeError):
    """A linear or nonlinear iteration failed to converge."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class MaximumPrincipleError(RuntimeError):
    """Concentration left [0, 1] by more than the admissible round-off."""
