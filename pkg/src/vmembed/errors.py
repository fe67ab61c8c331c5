"""Exception types shared across the package."""


class VmembedError(Exception):
    """Base class for all library errors."""


# --- file parsing ---------------------------------------------------------

class FormatError(VmembedError):
    """A file does not conform to its declared on-disk format."""


class MalformedHeader(FormatError):
    """Container header is not RIFF/WAVE or required chunks are missing."""


class UnsupportedEncoding(FormatError):
    """The WAV codec/bit depth/channel layout is outside the supported set."""


class EmptyAudio(FormatError):
    """A WAV file with zero sample frames."""


class CorruptFile(FormatError):
    """Bad magic, truncated payload, or failed checksum."""


class CorruptCheckpoint(CorruptFile):
    """Checkpoint file failed validation."""


# --- shapes and numerics --------------------------------------------------

class DimMismatch(VmembedError):
    """Vector/matrix dimensions do not line up with the model or config."""


class ShapeMismatch(DimMismatch):
    """Gradient or state shapes do not mirror the parameters."""


class ClipTooShort(VmembedError):
    """Audio clip shorter than one analysis frame."""


class TooManyBands(VmembedError):
    """More mel bands requested than spectrogram bins available."""


class TooFewFrames(VmembedError):
    """Not enough frames for the requested window or statistic."""


class RankDeficient(VmembedError):
    """Too few samples for the requested number of components."""


class NonFiniteInput(VmembedError):
    """Input data contains NaN or infinity."""


class NonFiniteActivation(VmembedError):
    """A forward pass produced NaN/inf; usually signals divergence."""


class NonFiniteLoss(VmembedError):
    """The training objective became NaN/inf."""


class StaleCache(VmembedError):
    """Backward called with a cache not produced by a train-mode forward
    on the same parameter object."""


class EmptyCorpus(VmembedError):
    """A fit operation received no data."""


# --- manifests and training ----------------------------------------------

class SchemaError(VmembedError):
    """Manifest line does not match the expected JSON schema."""


class DuplicatePairId(SchemaError):
    """Two manifest entries share a pair id."""


class MissingFile(VmembedError):
    """A manifest references a feature file that does not exist."""


class BatchTooLarge(VmembedError):
    """Requested batch size exceeds the split size."""


class DegenerateInputWarning(UserWarning):
    """Emitted when a zero vector is passed through a normalization."""


# Filesystem failures surface as the platform's own I/O error.
IoError = OSError
