"""Exception types shared across the package."""


class FlexgaitError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FlexgaitError):
    """A spec, wiring or argument set is structurally invalid (e.g. dimension mismatch)."""


class ValidationError(FlexgaitError):
    """Input data failed validation. Carries the offending index when known."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class IntegrationBlowupError(FlexgaitError):
    """A network state became non-finite during integration."""

    def __init__(self, message, neuron_index=None):
        super().__init__(message)
        self.neuron_index = neuron_index


class SimulationDivergedError(FlexgaitError):
    """The rigid-body simulation produced a non-finite or runaway state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InsufficientDataError(FlexgaitError):
    """A time series is too short for the requested analysis."""


class RankDeficiencyError(FlexgaitError):
    """A regression design matrix is rank deficient. Carries the collinear column indices."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)
