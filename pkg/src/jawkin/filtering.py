"""Zero-phase smoothing of pose series.

Poses are filtered in a six-channel parameterization: translation (mm) and
the rotation vector (rad) of ``R0^T R(t)``, where ``R0`` is the first
sample's rotation. Both filters run forward and backward so that the net
phase is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import signal as sps
from scipy.ndimage import median_filter

from .errors import (
    DiscontinuityError,
    GapError,
    InvalidCutoffError,
    NoPlateauError,
    ParameterOrderError,
    TooShortError,
    WindowTooLargeError,
)
from .kinematics import JawPoseSample
from .rigid import (
    Frame,
    FrameId,
    RigidTransform,
    nearest_rotation,
    rotation_angle_rad,
    so3_exp,
    so3_log,
)

SAVGOL_WINDOW = 21
SAVGOL_ORDER = 3
BUTTER_ORDER = 4

SNR_SEGMENT_S = 2.0
SNR_OVERLAP = 0.5
SNR_NOISE_BAND = 0.75  # noise floor from the top quarter of the spectrum
SNR_DROP_DB = 10.0
SNR_SMOOTH_BINS = 3
SNR_MIN_DURATION_S = 4.0

CHANNELS = ("tx", "ty", "tz", "rx", "ry", "rz")


@dataclass(frozen=True)
class PoseSignal:
    """Gap-free pose series as six channels.

    ``channels[:, :3]`` is translation in mm, ``channels[:, 3:]`` the
    rotation vector in radians relative to ``reference_rotation``.
    """

    sample_rate: float
    timestamps: NDArray[np.float64]
    channels: NDArray[np.float64]
    reference_rotation: NDArray[np.float64] = None
    parent: Frame = FrameId.O_VM
    child: Frame = FrameId.CS_MAND_ANAT

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=np.float64)
        t = np.asarray(self.timestamps, dtype=np.float64)
        if ch.ndim != 2 or ch.shape[1] != 6 or ch.shape[0] != t.shape[0]:
            raise ValueError(f"channels must be ({t.shape[0]}, 6), got {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise GapError("signal contains non-finite samples")
        r0 = np.eye(3) if self.reference_rotation is None else np.asarray(self.reference_rotation, float)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "reference_rotation", r0)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def with_channels(self, channels: NDArray[np.float64]) -> PoseSignal:
        return replace(self, channels=np.asarray(channels, dtype=np.float64))


def _check_regular(t: NDArray[np.float64], sample_rate: float) -> None:
    period = 1.0 / sample_rate
    dt = np.diff(t)
    if np.any(np.abs(dt - period) >= 0.1 * period):
        bad = int(np.flatnonzero(np.abs(dt - period) >= 0.1 * period)[0])
        raise GapError(f"series is not gap-free near t={t[bad]:.4f} s")


def pose_to_signal(samples: Sequence[JawPoseSample], sample_rate: Optional[float] = None) -> PoseSignal:
    if len(samples) < 2:
        raise TooShortError("need at least two pose samples")
    t = np.array([s.timestamp for s in samples], dtype=np.float64)
    if sample_rate is None:
        sample_rate = float(1.0 / np.median(np.diff(t)))
    _check_regular(t, sample_rate)
    r0 = samples[0].pose.rotation
    ch = np.empty((len(samples), 6))
    prev_r = r0
    prev_w = np.zeros(3)
    for i, s in enumerate(samples):
        r = s.pose.rotation
        if rotation_angle_rad(prev_r.T @ r) >= math.pi / 2:
            raise DiscontinuityError(f"rotation jumps by 90 degrees or more at t={t[i]:.4f} s")
        w = so3_log(r0.T @ r)
        theta = np.linalg.norm(w)
        if theta > 0:
            # equivalent rotation vector on the other side of the pi-sphere
            alt = w * (1.0 - 2.0 * math.pi / theta)
            if np.linalg.norm(alt - prev_w) < np.linalg.norm(w - prev_w):
                w = alt
        ch[i, :3] = s.pose.translation
        ch[i, 3:] = w
        prev_r, prev_w = r, w
    p = samples[0].pose
    return PoseSignal(sample_rate, t, ch, r0, p.parent, p.child)


def signal_to_poses(sig: PoseSignal) -> List[RigidTransform]:
    out = []
    for row in sig.channels:
        r = sig.reference_rotation @ so3_exp(row[3:])
        out.append(RigidTransform(nearest_rotation(r), row[:3], sig.parent, sig.child))
    return out


def signal_to_samples(sig: PoseSignal, quality: Optional[Sequence[float]] = None) -> List[JawPoseSample]:
    q = [math.nan] * len(sig) if quality is None else list(quality)
    return [JawPoseSample(float(t), p, qq) for t, p, qq in zip(sig.timestamps, signal_to_poses(sig), q)]


def savgol_bidirectional(sig: PoseSignal, window: int = SAVGOL_WINDOW,
                         poly_order: int = SAVGOL_ORDER) -> PoseSignal:
    """Savitzky-Golay smoothing applied forward, then on the reversed output.

    Edge samples are taken from the least-squares polynomial of the first or
    last full window, so polynomials up to ``poly_order`` pass unchanged
    everywhere.
    """
    if window % 2 != 1 or window < 1:
        raise ParameterOrderError(f"window must be a positive odd sample count, got {window}")
    if poly_order < 0 or poly_order >= window:
        raise ParameterOrderError(f"poly_order must satisfy 0 <= poly_order < window ({poly_order}, {window})")
    if len(sig) < window:
        raise WindowTooLargeError(f"window {window} exceeds series length {len(sig)}")
    x = sig.channels
    y = sps.savgol_filter(x, window, poly_order, axis=0, mode="interp")
    y = sps.savgol_filter(y[::-1], window, poly_order, axis=0, mode="interp")[::-1]
    return sig.with_channels(np.ascontiguousarray(y))


def butterworth_sos(order: int, cutoff: float, sample_rate: float) -> NDArray[np.float64]:
    """Digital Butterworth low-pass (bilinear transform, pre-warped at ``cutoff``)."""
    if order < 1:
        raise ParameterOrderError(f"filter order must be >= 1, got {order}")
    if not 0.0 < cutoff < sample_rate / 2.0:
        raise InvalidCutoffError(f"cutoff {cutoff} Hz outside (0, {sample_rate / 2.0}) Hz")
    return sps.butter(order, cutoff, btype="low", fs=sample_rate, output="sos")


def butterworth_lowpass_bidirectional(sig: PoseSignal, order: int = BUTTER_ORDER,
                                      cutoff: float = 4.5) -> PoseSignal:
    """Forward-backward Butterworth low-pass with mirror padding.

    The response is ``|H(f)|^2`` (-6.02 dB at ``cutoff``). Each end is
    extended by its full-length mirror image so that the start-up transient
    of the recursive filter has decayed before it reaches real samples. The
    forward-backward and backward-forward passes are averaged, which makes
    the output exactly time-reversal symmetric.
    """
    sos = butterworth_sos(order, cutoff, sig.sample_rate)
    min_len = 3 * (order + 1)
    if len(sig) <= min_len:
        raise TooShortError(f"series of {len(sig)} samples too short for order {order} (need > {min_len})")
    x = sig.channels
    padlen = len(sig) - 1
    fb = sps.sosfiltfilt(sos, x, axis=0, padtype="even", padlen=padlen)
    bf = sps.sosfiltfilt(sos, x[::-1], axis=0, padtype="even", padlen=padlen)[::-1]
    return sig.with_channels(0.5 * (fb + bf))


@dataclass(frozen=True)
class SnrSpectrum:
    frequencies: NDArray[np.float64]
    snr_db: NDArray[np.float64]  # smoothed, (n_freq, n_channels)
    noise_floor: NDArray[np.float64]  # per channel, PSD units


def snr_spectrum(sig: PoseSignal, segment_s: float = SNR_SEGMENT_S, overlap: float = SNR_OVERLAP,
                 noise_band: float = SNR_NOISE_BAND, smooth_bins: int = SNR_SMOOTH_BINS) -> SnrSpectrum:
    fs = sig.sample_rate
    if len(sig) / fs < SNR_MIN_DURATION_S - 0.5 / fs:
        raise TooShortError(f"need at least {SNR_MIN_DURATION_S} s of samples, got {len(sig) / fs:.2f} s")
    nper = int(round(segment_s * fs))
    f, psd = sps.welch(sig.channels, fs=fs, window="hann", nperseg=nper,
                       noverlap=int(round(overlap * nper)), axis=0, detrend="constant")
    band = f >= noise_band * fs / 2.0
    floor = np.median(psd[band], axis=0)
    floor = np.where(floor > 0, floor, np.finfo(float).tiny)
    snr = 10.0 * np.log10(np.maximum(psd, np.finfo(float).tiny) / floor)
    # running median: suppresses single-bin spikes without moving spectral edges
    smooth = median_filter(snr, size=(smooth_bins, 1), mode="nearest")
    return SnrSpectrum(f, smooth, floor)


def _crossing(f: NDArray, s: NDArray, drop_db: float) -> Optional[float]:
    """Frequency where ``s`` first falls ``drop_db`` below its low-frequency plateau."""
    s, f = s[1:], f[1:]  # DC carries the series mean, not motion
    if s.max() < drop_db:
        return None
    level = float(s.max())
    span = None
    for _ in range(50):
        # plateau = first run of bins within drop_db of the current level
        start = int(np.argmax(s >= level - drop_db))
        below = np.flatnonzero(s[start:] < level - drop_db)
        if below.size == 0:
            return None
        k = start + int(below[0])
        if span == (start, k):
            break
        span = (start, k)
        level = float(np.median(s[start:k]))
    thr = level - drop_db
    if k == 0:
        return float(f[0])
    # linear interpolation between the last bin above and the first below
    s0, s1 = s[k - 1], s[k]
    frac = (s0 - thr) / (s0 - s1) if s0 != s1 else 0.0
    return float(f[k - 1] + frac * (f[k] - f[k - 1]))


def estimate_cutoff_snr(sig: PoseSignal, drop_db: float = SNR_DROP_DB, **kwargs) -> float:
    """Low-pass cutoff (Hz) at the 10 dB drop of the estimated SNR.

    Per channel the Welch PSD is divided by the median PSD of the top quarter
    of the band; the returned value is the median crossing over channels that
    rise at least ``drop_db`` above their noise floor.
    """
    spec = snr_spectrum(sig, **kwargs)
    hits = [c for c in (_crossing(spec.frequencies, spec.snr_db[:, j], drop_db)
                        for j in range(spec.snr_db.shape[1])) if c is not None]
    if not hits:
        raise NoPlateauError(f"SNR never exceeds the noise floor by {drop_db} dB")
    return float(np.median(hits))
