"""Exception types shared across the package."""


class ConcurveError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ConcurveError):
    """Operand shapes are incompatible with the requested operation."""


class NumericalDomainError(ConcurveError):
    """An input left the numerical domain an operation can handle."""


class ContractError(ConcurveError):
    """A caller violated an operation precondition."""


class ConfigError(ConcurveError):
    """A model or training configuration is invalid."""


class DataError(ConcurveError):
    """Dataset contents violate what the consumer requires."""


class DivergenceError(ConcurveError):
    """Training produced a non-finite loss."""


class SchemaError(ConcurveError):
    """A file does not match its expected schema."""


class SweepError(ConcurveError):
    """A sweep could not produce any usable records."""
