"""Residual-based precision estimate and trajectory summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .errors import TooShortError
from .filtering import (
    BUTTER_ORDER,
    CHANNELS,
    SNR_MIN_DURATION_S,
    butterworth_lowpass_bidirectional,
    estimate_cutoff_snr,
    pose_to_signal,
    signal_to_poses,
)
from .kinematics import JawPoseSample, Trajectory3
from .rigid import rotation_angle_rad


@dataclass(frozen=True)
class PrecisionReport:
    translation_mean: float  # um
    translation_std: float  # um
    rotation_mean: float  # deg
    rotation_std: float  # deg
    cutoff_used: float  # Hz
    channel_rms: Dict[str, float] = field(default_factory=dict)  # mm for t*, deg for r*
    sample_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> PrecisionReport:
        return cls(**d)

    def format(self) -> str:
        rms = "  ".join(
            f"{k}={v * (1e3 if k.startswith('t') else 1.0):.3f}{'um' if k.startswith('t') else 'deg'}"
            for k, v in self.channel_rms.items()
        )
        return (
            f"translation precision: ({self.translation_mean:.1f} ± {self.translation_std:.1f}) μm\n"
            f"rotation precision:    ({self.rotation_mean:.3f} ± {self.rotation_std:.3f})°\n"
            f"cutoff: {self.cutoff_used:.2f} Hz (4th-order Butterworth, bidirectional)\n"
            f"samples: {self.sample_count}\n"
            f"per-channel residual RMS: {rms}"
        )


def residual_precision(raw: Sequence[JawPoseSample], cutoff: Union[float, str] = "auto",
                       order: int = BUTTER_ORDER, sample_rate: Optional[float] = None) -> PrecisionReport:
    """Precision from the residual between raw poses and their low-passed version.

    Translation residual is the per-sample distance (reported in um) and
    rotation residual the geodesic angle (deg); the report holds mean and
    population standard deviation of both.
    """
    sig = pose_to_signal(raw, sample_rate)
    if len(sig) / sig.sample_rate < SNR_MIN_DURATION_S - 0.5 / sig.sample_rate:
        raise TooShortError(f"need a gap-free span of at least {SNR_MIN_DURATION_S} s")
    fc = estimate_cutoff_snr(sig) if cutoff == "auto" else float(cutoff)
    filt = butterworth_lowpass_bidirectional(sig, order, fc)
    smooth = signal_to_poses(filt)
    d_t = np.array([np.linalg.norm(s.pose.translation - p.translation) for s, p in zip(raw, smooth)])
    d_r = np.degrees([rotation_angle_rad(s.pose.rotation.T @ p.rotation) for s, p in zip(raw, smooth)])
    resid = sig.channels - filt.channels
    chan = {}
    for j, name in enumerate(CHANNELS):
        v = float(np.sqrt(np.mean(resid[:, j] ** 2)))
        chan[name] = v if j < 3 else math.degrees(v)
    return PrecisionReport(
        translation_mean=float(np.mean(d_t) * 1e3),
        translation_std=float(np.std(d_t) * 1e3),
        rotation_mean=float(np.mean(d_r)),
        rotation_std=float(np.std(d_r)),
        cutoff_used=fc,
        channel_rms=chan,
        sample_count=len(raw),
    )


def aggregate_reports(reports: Sequence[PrecisionReport]) -> PrecisionReport:
    """Mean of means and pooled standard deviation over several recordings."""
    if not reports:
        raise TooShortError("no reports to aggregate")
    n = np.array([r.sample_count for r in reports], dtype=float)
    w = n / n.sum()

    def pooled(means, stds):
        means, stds = np.asarray(means), np.asarray(stds)
        grand = float(np.sum(w * means))
        return float(np.mean(means)), float(np.sqrt(np.sum(w * (stds**2 + (means - grand) ** 2))))

    tm, ts = pooled([r.translation_mean for r in reports], [r.translation_std for r in reports])
    rm, rs = pooled([r.rotation_mean for r in reports], [r.rotation_std for r in reports])
    chan = {k: float(np.sqrt(np.sum(w * np.array([r.channel_rms.get(k, 0.0) ** 2 for r in reports]))))
            for k in CHANNELS}
    return PrecisionReport(tm, ts, rm, rs, float(np.mean([r.cutoff_used for r in reports])),
                           chan, int(n.sum()))


@dataclass(frozen=True)
class TrajectoryStats:
    minimum: NDArray[np.float64]  # mm per axis
    maximum: NDArray[np.float64]
    path_length: float  # mm
    max_speed: float  # mm/s

    @property
    def range_of_motion(self) -> NDArray[np.float64]:
        return self.maximum - self.minimum


def trajectory_statistics(traj: Trajectory3) -> TrajectoryStats:
    if len(traj) < 2:
        raise TooShortError("trajectory needs at least two samples")
    p, t = traj.points, traj.timestamps
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return TrajectoryStats(p.min(axis=0), p.max(axis=0), float(seg.sum()),
                           float(np.max(seg / np.diff(t))))
