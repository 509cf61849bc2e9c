"""Landmark digitization and the two constant calibration transforms.

Six dental landmarks are touched with the digitizing pointer in a fixed
order: the three mandibular points first, then the three maxillary ones.
Each triad is ordered (right canine, left canine, incisal midpoint).

Mandibular landmarks are expressed in the MTA frame and maxillary ones in the
CRA frame, so each triad lives in a frame rigid with its own bone and head
or jaw motion during digitization cancels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.ndimage import uniform_filter1d

from .acquisition import MAX_GAP_FRAMES, MarkerFrame, RigGeometry, fit_body_pose
from .errors import ConfigError, IncompleteCalibrationError, NoStillnessWindowError, OcclusionError
from .rigid import (
    FrameId,
    RigidTransform,
    as_points,
    frame_from_three_points,
    invert,
    kabsch_fit,
)

STILL_MIN_FRAMES = 40
STILL_TOL_MM = 0.2
STILL_SMOOTH_FRAMES = 15
TRIM_FRACTION = 0.1
REGISTRATION_WARN_MM = 2.0

LANDMARK_ORDER = ("right_canine", "left_canine", "incisal_midpoint")


class RegistrationWarning(UserWarning):
    """Virtual-model registration residual exceeds the warning threshold."""


@dataclass(frozen=True)
class DigitizedLandmark:
    position: NDArray[np.float64]
    std: float
    n_frames: int
    t_start: float
    t_end: float
    reference: str


@dataclass(frozen=True)
class LandmarkSet:
    """Six digitized points; mandibular in CS_MTA, maxillary in CS_CRA."""

    mandibular: NDArray[np.float64]
    maxillary: NDArray[np.float64]
    mandibular_frame: FrameId = FrameId.CS_MTA
    maxillary_frame: FrameId = FrameId.CS_CRA

    def __post_init__(self) -> None:
        for name in ("mandibular", "maxillary"):
            pts = as_points(getattr(self, name))
            if pts.shape != (3, 3):
                raise ValueError(f"{name} triad must be 3x3, got {pts.shape}")
            frame_from_three_points(*pts)  # degeneracy check
            object.__setattr__(self, name, pts)


@dataclass
class CalibrationState:
    static_mta_to_mand: Optional[RigidTransform] = None
    model_registration: Optional[RigidTransform] = None
    incisal_point: Optional[NDArray[np.float64]] = None
    landmarks: Optional[LandmarkSet] = None
    model_landmarks: Optional[NDArray[np.float64]] = None
    registration_rms: float = math.nan
    digitized: List[DigitizedLandmark] = field(default_factory=list)
    complete: bool = False

    def require_complete(self) -> None:
        if not self.complete or self.static_mta_to_mand is None or self.model_registration is None:
            raise IncompleteCalibrationError(
                f"calibration incomplete ({len(self.digitized)} of 6 landmarks digitized)"
            )


def _tip_in_reference(frames: Sequence[MarkerFrame], rig: RigGeometry,
                      reference_body: str, pointer: str) -> NDArray[np.float64]:
    dp, ref = rig[pointer], rig[reference_body]
    out = np.full((len(frames), 3), np.nan)
    for i, f in enumerate(frames):
        dp_pose, _ = fit_body_pose(f, dp)
        ref_pose, _ = fit_body_pose(f, ref)
        if dp_pose is None or ref_pose is None:
            continue
        out[i] = invert(ref_pose).apply(dp_pose.apply(dp.tip_offset))
    return out


def find_stillness_windows(
    tips: NDArray[np.float64],
    still_min_frames: int = STILL_MIN_FRAMES,
    still_tol: float = STILL_TOL_MM,
    smooth_frames: int = STILL_SMOOTH_FRAMES,
    max_gap_frames: int = MAX_GAP_FRAMES,
) -> List[Tuple[int, int]]:
    """Half-open index ranges where the tip rests.

    Untracked frames (NaN rows) are skipped; a run of more than
    ``max_gap_frames`` of them ends a window. The frame-to-frame step is
    measured on a moving average over ``smooth_frames`` tracked frames so
    marker jitter does not break a window, and windows are then shrunk by
    half the averaging width so no frame whose average saw motion is kept.
    ``still_min_frames`` counts tracked frames.
    """
    idx = np.flatnonzero(~np.isnan(tips[:, 0]))
    if idx.size < 2:
        return []
    breaks = np.flatnonzero(np.diff(idx) > max_gap_frames + 1) + 1
    half = smooth_frames // 2
    windows = []
    for run in np.split(idx, breaks):
        if run.size < 2:
            continue
        pts = tips[run]
        sm = uniform_filter1d(pts, size=min(smooth_frames, run.size), axis=0, mode="nearest")
        step = np.linalg.norm(np.diff(sm, axis=0), axis=1)
        still = np.concatenate([[step[0] < still_tol], step < still_tol])
        k = 0
        while k < still.size:
            if not still[k]:
                k += 1
                continue
            m = k
            while m < still.size and still[m]:
                m += 1
            lo = k + (half if k > 0 else 0)
            hi = m - (half if m < still.size else 0)
            if hi - lo >= still_min_frames:
                windows.append((int(run[lo]), int(run[hi - 1]) + 1))
            k = m
    return windows


def _summarise(tips: NDArray, frames: Sequence[MarkerFrame], window: Tuple[int, int],
               reference: str) -> DigitizedLandmark:
    lo, hi = window
    pts = tips[lo:hi]
    pts = pts[~np.isnan(pts[:, 0])]
    mean = stats.trim_mean(pts, TRIM_FRACTION, axis=0)
    # pooled per-axis spread of the tip about its mean
    std = float(np.sqrt(np.mean(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)) / 3.0))
    return DigitizedLandmark(np.asarray(mean, float), std, pts.shape[0],
                             float(frames[lo].timestamp), float(frames[hi - 1].timestamp), reference)


def digitize_landmark(
    frames: Sequence[MarkerFrame],
    rig: RigGeometry,
    reference_body: str,
    pointer: str = "DP",
    still_min_frames: int = STILL_MIN_FRAMES,
    still_tol: float = STILL_TOL_MM,
) -> DigitizedLandmark:
    """Resting pointer-tip position expressed in ``reference_body``'s frame.

    Picks the longest stillness window (ties broken by smaller spread) and
    returns the 10%-trimmed mean tip position over it.
    """
    tips = _tip_in_reference(frames, rig, reference_body, pointer)
    if np.all(np.isnan(tips[:, 0])):
        raise OcclusionError(f"{pointer} or {reference_body} never tracked")
    windows = find_stillness_windows(tips, still_min_frames, still_tol)
    if not windows:
        raise NoStillnessWindowError(
            f"no window of {still_min_frames} frames with tip motion < {still_tol} mm/frame"
        )
    cands = [_summarise(tips, frames, w, reference_body) for w in windows]
    return max(cands, key=lambda d: (d.n_frames, -d.std))


def anatomical_frame(triad: ArrayLike, parent=None, child=None) -> RigidTransform:
    """Frame of an ordered (right canine, left canine, incisal) triad."""
    pts = as_points(triad)
    if pts.shape != (3, 3):
        raise ValueError("an anatomical triad has exactly three points")
    return frame_from_three_points(pts[0], pts[1], pts[2], parent, child)


def static_transform(mand_landmarks_in_mta: ArrayLike) -> RigidTransform:
    """Constant ``^{CS_MTA}T_{CS_Mand_Anat}``."""
    return anatomical_frame(mand_landmarks_in_mta, FrameId.CS_MTA, FrameId.CS_MAND_ANAT)


def register_virtual_model(
    max_landmarks_in_cra: ArrayLike,
    max_landmarks_in_vm: ArrayLike,
    warn_mm: float = REGISTRATION_WARN_MM,
) -> Tuple[RigidTransform, float]:
    """Kabsch registration ``^{O_VM}T_{CS_CRA}`` of the maxillary triads.

    The result maps CRA coordinates into the virtual-model frame; the RMS
    residual (mm) is returned alongside and a :class:`RegistrationWarning`
    is issued above ``warn_mm``.
    """
    transform, rms = kabsch_fit(max_landmarks_in_cra, max_landmarks_in_vm,
                                FrameId.O_VM, FrameId.CS_CRA)
    if rms > warn_mm:
        warnings.warn(
            f"virtual-model registration RMS {rms:.3f} mm exceeds {warn_mm} mm",
            RegistrationWarning, stacklevel=2,
        )
    return transform, rms


def incisal_point_in_anatomy(static: RigidTransform, mand_landmarks_in_mta: ArrayLike) -> NDArray[np.float64]:
    return invert(static).apply(as_points(mand_landmarks_in_mta)[2])


def build_calibration(
    landmarks: LandmarkSet,
    model_landmarks: ArrayLike,
    digitized: Sequence[DigitizedLandmark] = (),
    warn_mm: float = REGISTRATION_WARN_MM,
) -> CalibrationState:
    static = static_transform(landmarks.mandibular)
    reg, rms = register_virtual_model(landmarks.maxillary, model_landmarks, warn_mm)
    return CalibrationState(
        static_mta_to_mand=static,
        model_registration=reg,
        incisal_point=incisal_point_in_anatomy(static, landmarks.mandibular),
        landmarks=landmarks,
        model_landmarks=as_points(model_landmarks),
        registration_rms=rms,
        digitized=list(digitized),
        complete=True,
    )


def calibrate_session(
    frames: Sequence[MarkerFrame],
    rig: RigGeometry,
    model_landmarks: ArrayLike,
    pointer: str = "DP",
    still_min_frames: int = STILL_MIN_FRAMES,
    still_tol: float = STILL_TOL_MM,
    warn_mm: float = REGISTRATION_WARN_MM,
    order: Sequence[str] = LANDMARK_ORDER,
) -> CalibrationState:
    """Run the six-landmark session on one recording.

    Landmarks are taken from successive stillness windows: three with the
    MTA as reference, then three with the CRA. ``order`` names the teeth in
    the sequence they were touched within each arch (a permutation of
    :data:`LANDMARK_ORDER`). When fewer than six are found the returned
    state has ``complete=False``.
    """
    if sorted(order) != sorted(LANDMARK_ORDER):
        raise ConfigError(f"landmark order must be a permutation of {LANDMARK_ORDER}, got {tuple(order)}")
    perm = [list(order).index(name) for name in LANDMARK_ORDER]
    refs = ["MTA"] * 3 + ["CRA"] * 3
    tips = {b: _tip_in_reference(frames, rig, b, pointer) for b in ("MTA", "CRA")}
    cursor = 0
    found: List[DigitizedLandmark] = []
    for ref in refs:
        wins = [w for w in find_stillness_windows(tips[ref][cursor:], still_min_frames, still_tol)]
        if not wins:
            break
        lo, hi = wins[0]
        found.append(_summarise(tips[ref], frames, (cursor + lo, cursor + hi), ref))
        cursor += hi
    if len(found) < 6:
        return CalibrationState(digitized=found, complete=False)
    mand = np.array([d.position for d in found[:3]])[perm]
    maxi = np.array([d.position for d in found[3:]])[perm]
    digitized = [found[i] for i in perm] + [found[3 + i] for i in perm]
    return build_calibration(LandmarkSet(mand, maxi), model_landmarks, digitized, warn_mm)


def calibration_report(state: CalibrationState) -> str:
    lines = [f"calibration complete: {'yes' if state.complete else 'no'}"]
    names = [f"mandibular {n}" for n in LANDMARK_ORDER] + [f"maxillary {n}" for n in LANDMARK_ORDER]
    for name, d in zip(names, state.digitized):
        p = ", ".join(f"{v:.3f}" for v in d.position)
        lines.append(
            f"  {name:<30s} [{p}] mm in CS_{d.reference}  std {d.std:.4f} mm  "
            f"{d.n_frames} frames  t={d.t_start:.3f}-{d.t_end:.3f} s"
        )
    if state.complete:
        lines.append(f"  virtual-model registration RMS {state.registration_rms:.4f} mm")
        inc = ", ".join(f"{v:.3f}" for v in state.incisal_point)
        lines.append(f"  incisal point [{inc}] mm in CS_Mand_Anat")
    return "\n".join(lines)
