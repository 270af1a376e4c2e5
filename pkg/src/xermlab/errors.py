"""Exception types raised across the package."""


class XermError(Exception):
    """Base class for all package errors."""


class ConfigError(XermError, ValueError):
    pass


class InvalidProfile(ConfigError):
    pass


class InvalidThresholds(ConfigError):
    pass


class InsufficientSamples(XermError, ValueError):
    def __init__(self, cls, available, required):
        super().__init__(
            f"class {cls} has {available} samples, {required} required")
        self.cls = cls
        self.available = available
        self.required = required


class ParseError(XermError, ValueError):
    pass


class NonContiguousLabels(XermError, ValueError):
    pass


class EmptyClass(XermError, ValueError):
    pass


class ShapeMismatch(XermError, ValueError):
    pass


class CorruptCheckpoint(XermError, ValueError):
    pass


class InvalidDistribution(XermError, ValueError):
    pass


class InvalidSCM(XermError, ValueError):
    pass


class ZeroSupport(InvalidSCM):
    pass


class IdentityViolation(XermError, AssertionError):
    """A causal identity failed to hold at the requested tolerance."""


class LengthMismatch(XermError, ValueError):
    pass


class IdOutOfRange(XermError, ValueError):
    pass


class Divergence(XermError, ArithmeticError):
    pass


class NoFeatureLayer(XermError, ValueError):
    pass


class MissingManifest(XermError, FileNotFoundError):
    pass


class ConfigMismatch(XermError, ValueError):
    pass


class StageError(XermError):
    """Wraps a failure inside one pipeline stage, keeping the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
