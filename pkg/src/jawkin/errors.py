"""Exception types shared across the pipeline.

Every error carries a stable, machine-parsable ``code`` so the command line
can report ``error: <code>: <message>``.
"""

from __future__ import annotations


class JawkinError(Exception):
    """Base class for all pipeline errors."""

    code = "jawkin-error"


class FrameMismatchError(JawkinError, ValueError):
    code = "frame-mismatch"


class DegenerateGeometryError(JawkinError, ValueError):
    code = "degenerate-geometry"


class NumericalFailureError(JawkinError, RuntimeError):
    code = "numerical-failure"


class UnknownLabelError(JawkinError, KeyError):
    code = "unknown-label"

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else self.code


class EmptyRecordingError(JawkinError, ValueError):
    code = "empty-recording"


class OcclusionError(JawkinError, ValueError):
    code = "occlusion"


class NoStillnessWindowError(JawkinError, ValueError):
    code = "no-stillness-window"


class IncompleteCalibrationError(JawkinError, ValueError):
    code = "incomplete-calibration"


class EmptyOverlapError(JawkinError, ValueError):
    code = "empty-overlap"


class GapError(JawkinError, ValueError):
    code = "gap"


class DiscontinuityError(JawkinError, ValueError):
    code = "discontinuity"


class WindowTooLargeError(JawkinError, ValueError):
    code = "window-too-large"


class ParameterOrderError(JawkinError, ValueError):
    code = "parameter-order"


class InvalidCutoffError(JawkinError, ValueError):
    code = "invalid-cutoff"


class TooShortError(JawkinError, ValueError):
    code = "too-short"


class NoPlateauError(JawkinError, ValueError):
    code = "no-plateau"


class InvalidProfileError(JawkinError, ValueError):
    code = "invalid-profile"


class AlignmentError(JawkinError, ValueError):
    code = "alignment"


class EmptySeriesError(JawkinError, ValueError):
    code = "empty-series"


class MissingGroupError(JawkinError, KeyError):
    code = "missing-group"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else self.code


class VersionMismatchError(JawkinError, ValueError):
    code = "version-mismatch"


class CorruptFileError(JawkinError, OSError):
    code = "corrupt-file"


class ConfigError(JawkinError, ValueError):
    code = "config"
