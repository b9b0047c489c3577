"""Exception types shared across the toolkit."""


class CovidScreenError(Exception):
    """Base class for all toolkit errors."""


# --- data ingest ---

class MissingFile(CovidScreenError):
    """A manifest references an image file that does not exist."""


class DuplicateId(CovidScreenError):
    """Two manifest rows share the same image_id."""


class UnknownLabel(CovidScreenError):
    """A manifest row carries a label outside the class vocabulary."""


class UndecodableImage(CovidScreenError):
    """A file could not be decoded as a raster image."""


class InsufficientRecords(CovidScreenError):
    """A class has fewer members than the number of requested splits."""


# --- tensors / models ---

class ShapeMismatch(CovidScreenError):
    """An array or tensor does not have the expected shape."""


class MissingAuxCheckpoint(CovidScreenError):
    """An auxiliary feature extractor is required but not attached."""


class CorruptCheckpoint(CovidScreenError):
    """A checkpoint file is truncated or structurally invalid."""


class VersionMismatch(CovidScreenError):
    """A checkpoint's format version or model spec does not fit the target."""


# --- training / evaluation ---

class EmptySplit(CovidScreenError):
    """A required dataset split contains no records."""


class DivergenceDetected(CovidScreenError):
    """Training loss became non-finite; carries the last good checkpoint."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class SingleClassInput(CovidScreenError):
    """ROC/AUC need at least one positive and one negative example."""


class EmptySubgroup(CovidScreenError):
    """A subgroup analysis was requested for an absent subgroup."""


class LabelMappingError(CovidScreenError):
    """A cross-dataset label has no entry in the provided label map."""


class InvalidClass(CovidScreenError):
    """A class name or index is outside the model's output range."""
