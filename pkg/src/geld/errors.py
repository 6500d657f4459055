"""Exception hierarchy shared across the package."""


class GeldError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(GeldError):
    """Tensor shapes do not agree for the requested operation."""


class MaskingError(GeldError):
    """A softmax row is entirely masked (all -inf)."""


class NumericError(GeldError):
    """A computation produced non-finite values where finite ones are required."""


class DegenerateInstanceError(GeldError):
    """All points coincide; coordinate normalization is undefined."""


class TourError(GeldError):
    """A node sequence is not a valid permutation for its instance."""


class MetricError(GeldError):
    """Invalid reference value for a quality metric (e.g. non-positive optimum)."""


class ExhaustedError(GeldError):
    """No available nodes remain for a candidate query."""


class RegionPreconditionError(GeldError):
    """Coordinates handed to the region grid are not normalized to the unit square."""


class TsplibError(GeldError):
    """Base class for TSPLIB ingestion problems."""


class UnsupportedFormatError(TsplibError):
    """The file is recognized but uses an unsupported variant (e.g. EXPLICIT weights)."""


class TsplibParseError(TsplibError):
    """The file is malformed (missing sections, dimension mismatch, bad numbers)."""


class CheckpointError(GeldError):
    """Base class for checkpoint persistence problems."""


class ChecksumError(CheckpointError):
    """Stored checksum does not match the payload; file is corrupt or truncated."""


class VersionMismatchError(CheckpointError):
    """Checkpoint format version is not readable by this build."""


class TrainingAbortError(GeldError):
    """Training stopped because the loss or gradients became non-finite."""
