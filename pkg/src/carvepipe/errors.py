"""Exception types shared across the package."""


class CarvepipeError(Exception):
    """Base class for errors raised by carvepipe."""


class BehindCameraError(CarvepipeError, ValueError):
    """A point lies at or behind the camera plane (camera-frame z <= 0)."""


class InsideSurfaceError(CarvepipeError, ValueError):
    """A ray was traced from a point inside the object (sdf < 0)."""


class DatasetError(CarvepipeError):
    """Dataset directory is missing, inconsistent, or corrupted."""


class StageError(CarvepipeError):
    """A stage process failed (nonzero exit, timeout, crash)."""


class StageValidationError(StageError):
    """A stage produced missing or malformed output files."""

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = path


class PipelineInvariantError(CarvepipeError):
    """A live pipeline invariant was violated during a run."""
