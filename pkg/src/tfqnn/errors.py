"""Exception hierarchy shared by the engine, experiments and CLI."""


class TfqnnError(Exception):
    """Base class for all package errors."""


class CapacityError(TfqnnError):
    """Requested register exceeds the simulator's qubit cap."""


class ConfigError(TfqnnError, ValueError):
    """Invalid model, derivative or experiment configuration."""


class InputError(TfqnnError, ValueError):
    """Input data does not match what the operation expects."""


class NumericalError(TfqnnError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class MetricError(NumericalError):
    """A metric is undefined for the supplied reference data."""


class FlowFieldError(InputError):
    """A flow-field file could not be parsed or is inconsistent."""
