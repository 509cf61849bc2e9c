"""Head-motion-free mandible kinematics in the virtual-model frame.

Per capture frame::

    ^{CRA}T_{Mand}(t) = (^{O}T_{CRA}(t))^-1 . ^{O}T_{MTA}(t) . ^{MTA}T_{Mand}
    ^{VM}T_{Mand}(t)  = ^{VM}T_{CRA} . ^{CRA}T_{Mand}(t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .acquisition import PoseSeries
from .calibration import CalibrationState
from .errors import EmptyOverlapError
from .rigid import FrameId, RigidTransform, as_point, compose, invert


@dataclass(frozen=True)
class JawPoseSample:
    timestamp: float
    pose: RigidTransform  # ^{O_VM}T_{CS_Mand_Anat}
    quality: float = math.nan  # max(MTA, CRA) marker-fit RMS, mm


@dataclass(frozen=True)
class Trajectory3:
    label: str
    timestamps: NDArray[np.float64]
    points: NDArray[np.float64]  # (N, 3) in O_VM, mm

    def __post_init__(self) -> None:
        t = np.asarray(self.timestamps, dtype=np.float64)
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if p.shape[0] != t.shape[0]:
            raise ValueError("trajectory timestamps and points differ in length")
        if t.shape[0] > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.timestamps.shape[0]


def relative_mandible_pose(mta: RigidTransform, cra: RigidTransform,
                           calib: CalibrationState) -> RigidTransform:
    """``^{CS_CRA}T_{CS_Mand_Anat}`` for one frame."""
    calib.require_complete()
    return compose(compose(invert(cra), mta), calib.static_mta_to_mand)


def mandible_in_model(relative: RigidTransform, calib: CalibrationState) -> RigidTransform:
    """``^{O_VM}T_{CS_Mand_Anat}`` for one frame."""
    calib.require_complete()
    return compose(calib.model_registration, relative)


def _align(t_a: NDArray, t_b: NDArray, tol: float) -> NDArray[np.int64]:
    """Index into ``t_b`` for each ``t_a`` (exact or nearest within tol), -1 if none."""
    if t_b.shape[0] == 0:
        return np.full(t_a.shape[0], -1)
    pos = np.clip(np.searchsorted(t_b, t_a), 0, t_b.shape[0] - 1)
    left = np.clip(pos - 1, 0, t_b.shape[0] - 1)
    pick = np.where(np.abs(t_b[left] - t_a) < np.abs(t_b[pos] - t_a), left, pos)
    out = np.where(np.abs(t_b[pick] - t_a) <= tol, pick, -1)
    return out


def process_session(mta_series: PoseSeries, cra_series: PoseSeries,
                    calib: CalibrationState) -> List[JawPoseSample]:
    """Model-frame mandible poses for every frame where both bodies are tracked.

    Frames are paired by timestamp, falling back to the nearest CRA sample
    within half a sample period.
    """
    calib.require_complete()
    tol = 0.5 / mta_series.sample_rate
    idx = _align(mta_series.timestamps, cra_series.timestamps, tol)
    if not np.any(idx >= 0):
        raise EmptyOverlapError("MTA and CRA series share no timestamps")
    mta_ok, cra_ok = mta_series.valid, cra_series.valid
    both = (idx >= 0) & mta_ok & np.where(idx >= 0, cra_ok[np.maximum(idx, 0)], False)
    if not np.any(both):
        raise EmptyOverlapError("no frame where both MTA and CRA are tracked")
    samples = []
    for i in np.flatnonzero(both):
        j = idx[i]
        rel = relative_mandible_pose(mta_series.pose(i), cra_series.pose(j), calib)
        q = np.nanmax([mta_series.rms[i], cra_series.rms[j], -np.inf])
        samples.append(JawPoseSample(float(mta_series.timestamps[i]),
                                     mandible_in_model(rel, calib),
                                     float(q) if np.isfinite(q) else math.nan))
    return samples


def samples_to_series(samples: Sequence[JawPoseSample], sample_rate: float) -> PoseSeries:
    """Regular series on the sample grid; missing frames become gaps."""
    t = np.array([s.timestamp for s in samples])
    if t.shape[0] == 0:
        raise EmptyOverlapError("no samples")
    steps = np.rint((t - t[0]) * sample_rate).astype(np.int64)
    n = int(steps[-1]) + 1
    mats = np.full((n, 4, 4), np.nan)
    rms = np.full(n, np.nan)
    grid = t[0] + np.arange(n) / sample_rate
    for k, s in zip(steps, samples):
        mats[k] = s.pose.matrix
        rms[k] = s.quality
        grid[k] = s.timestamp
    return PoseSeries(FrameId.O_VM, FrameId.CS_MAND_ANAT, sample_rate, grid, mats, rms)


def reference_trajectory(samples: Sequence[JawPoseSample], point: ArrayLike,
                         label: str = "incisal") -> Trajectory3:
    """Track a mandible-fixed point (CS_Mand_Anat, mm) through the model frame."""
    p = as_point(point)
    t = np.array([s.timestamp for s in samples], dtype=np.float64)
    pts = np.array([s.pose.rotation @ p + s.pose.translation for s in samples]).reshape(-1, 3)
    return Trajectory3(label, t, pts)


def contiguous_runs(samples: Sequence[JawPoseSample], sample_rate: float) -> List[List[JawPoseSample]]:
    """Split samples wherever consecutive timestamps skip a frame."""
    runs: List[List[JawPoseSample]] = []
    period = 1.0 / sample_rate
    for s in samples:
        if runs and abs(s.timestamp - runs[-1][-1].timestamp - period) < 0.1 * period:
            runs[-1].append(s)
        else:
            runs.append([s])
    return runs
