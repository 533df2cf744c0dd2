"""Exception hierarchy shared across the pipeline.

Every error the public API can raise is defined here so callers (and the
HTTP layer) can map them to stable error codes by class name.
"""


class PipelineError(Exception):
    """Base class for all capture3d errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- imaging -----------------------------------------------------------


class EmptyMask(PipelineError):
    pass


class EmptyContourSet(PipelineError):
    pass


class DegeneratePolygon(PipelineError):
    pass


class RectOutOfBounds(PipelineError):
    pass


class MalformedImage(PipelineError):
    pass


# --- lasso -------------------------------------------------------------


class StrokeTooShort(PipelineError):
    pass


class ZoneTooSmall(PipelineError):
    pass


# --- detection ---------------------------------------------------------


class BackendUnavailable(PipelineError):
    pass


class BackendTimeout(PipelineError):
    pass


class MalformedBackendResponse(PipelineError):
    pass


class EncodingFailure(PipelineError):
    pass


# --- generation --------------------------------------------------------


class QueueFull(PipelineError):
    pass


class DegenerateSilhouette(PipelineError):
    pass


# --- meshops -----------------------------------------------------------


class NotManifold(PipelineError):
    pass


class TargetTooSmall(PipelineError):
    pass


class DegenerateFace(PipelineError):
    pass


class MeshTooLarge(PipelineError):
    pass


class MalformedAsset(PipelineError):
    pass


# --- evaluation --------------------------------------------------------


class OutOfRangeItem(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


# --- server ------------------------------------------------------------


class UnknownSession(PipelineError):
    pass


class UnknownObject(PipelineError):
    pass


class UnknownJob(PipelineError):
    pass


class NotReady(PipelineError):
    pass


class NotDetectedYet(PipelineError):
    pass


class SessionLimitReached(PipelineError):
    pass
