"""Exception types shared across the toolkit."""


class EmorecError(Exception):
    """Base class for all toolkit errors."""


class AudioFormatError(EmorecError, ValueError):
    """Malformed container or corrupt audio payload."""


class UnsupportedEncodingError(EmorecError, ValueError):
    """Valid container, but a codec/layout we do not decode."""


class EmptyAudioError(EmorecError, ValueError):
    """An operation received audio with no samples."""


class ParameterError(EmorecError, ValueError):
    """An argument outside its documented range."""


class ManifestError(EmorecError, ValueError):
    """Bad manifest file (missing columns, duplicates, unknown labels)."""


class MappingError(ManifestError):
    """Unknown dataset or raw emotion label."""


class InsufficientDataError(EmorecError, ValueError):
    """Not enough samples for the requested statistic or fit."""


class ShapeError(EmorecError, ValueError):
    """Input dimensionality does not match the fitted model."""


class ArtifactVersionError(EmorecError, ValueError):
    """Serialized model has an unknown format version."""


class ArtifactIntegrityError(EmorecError, ValueError):
    """Serialized model payload fails its checksum."""


class MissingSourceError(EmorecError, KeyError):
    """An augmentation plan references an unknown source utterance."""


class DegenerateNoiseError(EmorecError, ValueError):
    """Noise clip is silent and cannot be scaled to a target SNR."""


class TrainingDivergedError(EmorecError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int):
        super().__init__(f"training diverged: non-finite loss at step {step}")
        self.step = step


class ConfigError(EmorecError, ValueError):
    """Pipeline configuration failed validation."""


class UndefinedMetricError(EmorecError, ValueError):
    """A metric has no defined value for the given inputs."""
