"""Exception types shared across the package."""


class IontomoError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(IontomoError):
    """A value passed to a constructor or operation is out of range."""


class CapabilityError(IontomoError):
    """A requested pulse exceeds what the drive hardware model allows."""


class SynthesisError(IontomoError):
    """Pulse-shape search failed to meet its band contract."""


class ConfigurationError(IontomoError):
    """A configuration document is malformed or inconsistent."""


class CalibrationError(IontomoError):
    """Scale calibration produced an unusable result."""


class EstimationError(IontomoError):
    """An estimator was handed data it cannot work with."""
