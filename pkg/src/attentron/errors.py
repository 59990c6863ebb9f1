"""Exception types shared across the package."""


class AttentronError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(AttentronError, ValueError):
    """Tensor dimensions do not line up; message names both shapes."""


class ConfigError(AttentronError, ValueError):
    """Invalid configuration value (even kernel, bad band edges, unknown key/mode)."""


class LengthError(AttentronError, ValueError):
    """A sequence is empty or too short for the requested operation."""


class AttentionError(AttentronError, RuntimeError):
    """Attention has nothing to attend to (empty reference set / all positions masked)."""


class OptimizerError(AttentronError, RuntimeError):
    """Optimizer received a non-finite gradient; message names the parameter."""


class InputError(AttentronError, ValueError):
    """Bad user-facing input, e.g. empty text or a character outside the alphabet."""


class FormatError(AttentronError, ValueError):
    """A file does not conform to its declared binary/text format."""


class CheckpointMismatchError(AttentronError, ValueError):
    """Checkpoint tensors do not match the current model configuration."""


class ManifestError(AttentronError, ValueError):
    """Malformed manifest; message carries the offending line number."""


class SamplingError(AttentronError, RuntimeError):
    """Reference sampling cannot satisfy its constraints."""


class UndefinedSimilarityError(AttentronError, ValueError):
    """Cosine similarity requested against a zero vector."""


class TrainingDivergedError(AttentronError, RuntimeError):
    """Loss became non-finite; a diagnostic checkpoint was written."""
