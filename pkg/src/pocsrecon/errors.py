"""Exception hierarchy shared by all modules."""


class ReconError(Exception):
    """Base class for errors raised by pocsrecon."""


class DimensionError(ReconError, ValueError):
    """Operands do not share a grid, channel count or index length."""


class UnsupportedConfigurationError(ReconError, ValueError):
    pass


class PreconditionError(ReconError, ValueError):
    pass


class ConfigError(ReconError, ValueError):
    pass


class DegenerateHyperplaneError(ReconError):
    """The projected kernel vanishes, so the sample carries no information in the subspace."""


class DegenerateSamplingError(ReconError):
    pass


class TableRangeError(ReconError, ValueError):
    pass


class DivergenceError(ReconError, FloatingPointError):
    pass


class CalibrationError(ReconError):
    """An experiment could not be calibrated to its target statistics."""
