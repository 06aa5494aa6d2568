"""Exception types shared across the package."""


class ModelError(ValueError):
    """Base class for invalid model inputs."""


class DimensionError(ModelError):
    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class InfeasibleAllocationError(ModelError):
    def __init__(self, report):
        self.report = report
        super().__init__("allocation is not in the feasible set:\n" + report.describe())


class UndefinedShareError(ModelError):
    """Raised when the attack prize share is requested for a zero-cost attack."""


class DegenerateColumnError(ModelError):
    """An SSP column holds no stake, so per-SSP ratios are undefined."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"SSP column {column} has zero total stake")


class InfeasibleCoalitionError(ModelError):
    pass


class PriceFileError(ModelError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
