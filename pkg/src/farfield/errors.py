"""Exception types raised across the toolkit.

Everything derives from :class:`FarfieldError` so the CLI can map data
errors to exit code 1 without catching programming errors.
"""

import numpy as np


class FarfieldError(Exception):
    """Base class for all data / domain errors."""


class ShapeError(FarfieldError, ValueError):
    pass


class SingularSystemError(FarfieldError, np.linalg.LinAlgError):
    pass


class FormatError(FarfieldError, ValueError):
    """Malformed or truncated file, bad magic, unsupported codec."""


class SampleRateError(FarfieldError, ValueError):
    pass


class InfeasibleRoomError(FarfieldError, ValueError):
    pass


class SnrError(FarfieldError, ValueError):
    pass


class ClipTooShortError(FarfieldError, ValueError):
    pass


class EerError(FarfieldError, ValueError):
    pass


class ConfigError(FarfieldError, ValueError):
    pass


class StageError(FarfieldError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
