"""Exception types shared across the package."""


class FHRFormerError(Exception):
    """Base class for all package errors."""


class DimensionError(FHRFormerError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(FHRFormerError, ValueError):
    """A numeric parameter lies outside its valid range."""


class DataError(FHRFormerError, ValueError):
    """Input data cannot be processed (empty, all-missing, out of range)."""


class ConfigError(FHRFormerError, ValueError):
    """A configuration is internally inconsistent."""


class ContractError(FHRFormerError, ValueError):
    """A caller violated an operation's precondition."""


class TrainingError(FHRFormerError, RuntimeError):
    """Training produced a non-finite value."""


class NumericalError(FHRFormerError, FloatingPointError):
    """A forward or backward pass produced NaN or infinity."""
