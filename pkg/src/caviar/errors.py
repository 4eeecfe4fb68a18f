"""Exception hierarchy; the CLI maps each family to an exit code."""


class CaviarError(Exception):
    pass


class ConfigError(CaviarError, ValueError):
    """Invalid run or experiment configuration (exit 2)."""


class DataError(CaviarError, ValueError):
    """Unreadable or inconsistent input series (exit 3)."""


class EstimationError(CaviarError, RuntimeError):
    """Fitting, covariance or test computation failed (exit 4)."""


class InfeasibleParameters(EstimationError):
    """Indirect GARCH inner expression went negative at ``index``."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"negative Indirect GARCH inner expression at t={index + 1}")


class NonFinitePath(EstimationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"quantile path became non-finite at t={index + 1}")
