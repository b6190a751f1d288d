"""Exception types raised across the package."""


class CakeError(Exception):
    """Base class for all package errors."""


class DimensionError(CakeError, ValueError):
    pass


class NormalizationError(CakeError, ValueError):
    pass


class FormatError(CakeError, ValueError):
    """A cube, mask or flow file could not be parsed."""


class BlockParityError(CakeError, ValueError):
    pass


class UnsupportedMaskError(CakeError, ValueError):
    pass


class InvalidFlowError(CakeError, ValueError):
    pass


class DivergenceError(CakeError, RuntimeError):
    pass


class InfeasibleError(CakeError, RuntimeError):
    pass


class ConfigError(CakeError, ValueError):
    pass


class StageDependencyError(CakeError, FileNotFoundError):
    pass
