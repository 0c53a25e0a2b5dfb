"""Exception types shared across the pipeline."""


class OwsggError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(OwsggError):
    """Bad or unknown configuration key/value."""


class DegenerateBox(OwsggError):
    """Box has zero area after clamping to the image."""


class UnknownDataset(OwsggError):
    """Dataset enum value has no prompt template (custom without template)."""


class EmptyEntityList(OwsggError):
    """Entity response parsed to nothing."""


class MappingEmpty(OwsggError):
    """Union of entity mappings is empty."""


class AllEntitiesAbsent(OwsggError):
    """Every mapped category returned zero detections."""


class BackendUnavailable(OwsggError):
    """Backend endpoint unreachable or returned a server error."""


class MalformedResponse(OwsggError):
    """Backend returned a payload that does not match its protocol."""


class ReplayMiss(OwsggError):
    """Replay mode requested a key absent from the cache."""


class DimensionMismatch(OwsggError):
    """Vector dimensions inconsistent within a batch, or depth map does not match image size."""


class NonPositiveScore(OwsggError):
    """Log-fusion received a score outside (0, 1]."""


class NoGroundTruth(OwsggError):
    """Recall requested over a dataset with zero ground-truth relations."""


class UnknownLabel(OwsggError):
    """Label outside the full vocabulary."""


class StageOrderError(OwsggError):
    """A stage was run before its prerequisites were cached."""


class PairResponseError(OwsggError):
    """Base for malformed pair-wise VLM responses; carries the pair index."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"{type(self).__name__}: pair {index}")


class MissingPair(PairResponseError):
    """Expected pair index absent from the response."""


class ScoreOutOfRange(PairResponseError):
    """Pair score outside the 1..5 scale."""


class DuplicatePair(PairResponseError):
    """Pair index occurred more than once."""


class UnsplittableLine(PairResponseError):
    """Relation response line has no sentence delimiter."""
