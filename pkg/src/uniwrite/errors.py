"""Exception types shared across the package."""


class UniwriteError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(UniwriteError):
    """Invalid experiment configuration (bad value, range or combination)."""


class DimensionError(UniwriteError):
    """Operand shapes are incompatible for the requested operation."""


class StateError(UniwriteError):
    """Operation called in the wrong order (e.g. backward twice per forward)."""


class ContractError(UniwriteError):
    """Caller violated an API contract that is not a shape or state problem."""


class NumericError(UniwriteError):
    """Non-finite values encountered where finite numbers are required."""


class SizeError(UniwriteError):
    """Requested computation exceeds a hard size budget."""


class CheckpointError(UniwriteError):
    """Base class for checkpoint load/save failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint file has an unsupported magic string or format version."""


class CheckpointCompatibilityError(CheckpointError):
    """Checkpoint fingerprint or parameter shapes do not match the model."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint file is truncated or otherwise unreadable."""
