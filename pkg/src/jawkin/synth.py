"""Synthetic recordings with known ground truth.

The virtual-model frame doubles as the skull frame: x anterior, y left,
z up (mm). Jaw displacements are generated in a frame whose origin is the
resting incisal point and are applied about a transverse hinge axis 100 mm
posterior to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .acquisition import BodyGeometry, MarkerFrame, PoseSeries, RigGeometry
from .calibration import anatomical_frame
from .errors import AlignmentError, InvalidProfileError
from .kinematics import JawPoseSample
from .rigid import (
    FrameId,
    RigidTransform,
    invert,
    rotation_angle_rad,
    so3_exp,
    so3_log,
)

KINDS = ("open_close", "protrusion_retrusion", "lateral", "cyclic", "composite")
HINGE_DISTANCE_MM = 100.0
MAX_OPENING_MM = 60.0
MAX_LATERAL_MM = 15.0
MAX_PROTRUSION_MM = 15.0
DEFAULT_AMPLITUDE_MM = {"open_close": 20.0, "protrusion_retrusion": 6.0, "lateral": 8.0,
                        "cyclic": 20.0, "composite": 20.0}

# resting anatomy in O_VM; each triad ordered (right canine, left canine, incisal midpoint)
MANDIBULAR_LANDMARKS = np.array([[-8.0, -14.0, -2.0], [-8.5, 14.5, -2.3], [0.0, 0.0, -2.0]])
MAXILLARY_LANDMARKS = np.array([[-7.5, -15.5, 2.0], [-8.0, 15.0, 2.6], [1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class MotionProfile:
    kind: str = "open_close"
    amplitude_mm: Optional[float] = None  # None: DEFAULT_AMPLITUDE_MM[kind]
    amplitude_deg: float = 2.0
    frequency: float = 1.0  # Hz
    duration: float = 10.0  # s
    rest: float = 1.0  # s of stillness before and after the movement
    ramp: Optional[float] = None  # raised-cosine onset/offset, s; default one period

    def __post_init__(self) -> None:
        if self.amplitude_mm is None:
            object.__setattr__(self, "amplitude_mm", DEFAULT_AMPLITUDE_MM.get(self.kind, 20.0))

    def validate(self, sample_rate: float) -> None:
        if self.kind not in KINDS:
            raise InvalidProfileError(f"unknown motion kind {self.kind!r}; expected one of {KINDS}")
        if not (self.frequency > 0 and self.frequency < sample_rate / 10.0):
            raise InvalidProfileError(f"frequency must lie in (0, {sample_rate / 10.0}) Hz")
        if self.amplitude_mm < 0 or self.amplitude_deg < 0:
            raise InvalidProfileError("amplitudes must be non-negative")
        limit = {"lateral": MAX_LATERAL_MM, "protrusion_retrusion": MAX_PROTRUSION_MM}.get(self.kind, MAX_OPENING_MM)
        if self.amplitude_mm > limit:
            raise InvalidProfileError(f"{self.kind} amplitude {self.amplitude_mm} mm exceeds {limit} mm")
        if self.duration <= 2 * self.rest or self.rest < 0:
            raise InvalidProfileError("duration must exceed twice the rest time")

    @property
    def ramp_s(self) -> float:
        return 1.0 / self.frequency if self.ramp is None else float(self.ramp)


def _envelope(tau: NDArray, length: float, ramp: float) -> NDArray:
    e = np.ones_like(tau)
    if ramp > 0:
        up = tau < ramp
        e[up] = 0.5 * (1.0 - np.cos(math.pi * tau[up] / ramp))
        down = tau > length - ramp
        e[down] = 0.5 * (1.0 - np.cos(math.pi * (length - tau[down]) / ramp))
    e[(tau < 0) | (tau > length)] = 0.0
    return e


def _hinge_matrices(theta: NDArray, phi: NDArray, slide: NDArray) -> NDArray:
    """``Tr(slide) . Rz(phi) Ry(theta)`` about the hinge pivot, as (N, 4, 4)."""
    n = theta.shape[0]
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    ry = np.zeros((n, 3, 3))
    ry[:, 0, 0], ry[:, 0, 2], ry[:, 1, 1], ry[:, 2, 0], ry[:, 2, 2] = ct, st, 1.0, -st, ct
    rz = np.zeros((n, 3, 3))
    rz[:, 0, 0], rz[:, 0, 1], rz[:, 1, 0], rz[:, 1, 1], rz[:, 2, 2] = cp, -sp, sp, cp, 1.0
    r = rz @ ry
    pivot = np.array([-HINGE_DISTANCE_MM, 0.0, 0.0])
    m = np.zeros((n, 4, 4))
    m[:, :3, :3] = r
    m[:, :3, 3] = slide + pivot - r @ pivot
    m[:, 3, 3] = 1.0
    return m


def _segment(kind: str, a_mm: float, a_deg: float, f: float, tau: NDArray, length: float, ramp: float):
    env = _envelope(tau, length, ramp)
    w = 2.0 * math.pi * f * tau
    act = env * 0.5 * (1.0 - np.cos(w))  # 0 -> 1 -> 0 per cycle
    osc = env * np.sin(w)  # -1 .. 1
    tilt = math.radians(a_deg)
    zero = np.zeros_like(tau)
    slide = np.zeros((tau.shape[0], 3))
    if kind == "open_close":
        theta, phi = math.asin(a_mm / HINGE_DISTANCE_MM) * act, zero
        slide[:, 0] = 0.2 * a_mm * act
    elif kind == "protrusion_retrusion":
        theta, phi = tilt * act, zero
        slide[:, 0] = a_mm * act
    elif kind == "lateral":
        theta = tilt * np.abs(osc)
        phi = math.asin(a_mm / HINGE_DISTANCE_MM) * osc
    else:  # cyclic: opening with a lateral swing a quarter cycle out of phase
        theta = math.asin(a_mm / HINGE_DISTANCE_MM) * act
        phi = math.asin(min(0.3 * a_mm, MAX_LATERAL_MM) / HINGE_DISTANCE_MM) * osc
    return theta, phi, slide


def generate_motion(profile: MotionProfile, sample_rate: float = 200.0) -> PoseSeries:
    """Jaw displacement series (identity at rest) in the incisal-centred frame."""
    profile.validate(sample_rate)
    n = int(round(profile.duration * sample_rate))
    t = np.arange(n) / sample_rate
    length = profile.duration - 2 * profile.rest
    if profile.kind == "composite":
        parts = ("open_close", "lateral", "protrusion_retrusion", "cyclic")
        seg = length / len(parts)
        amp = {"open_close": profile.amplitude_mm,
               "lateral": min(profile.amplitude_mm / 2.0, MAX_LATERAL_MM),
               "protrusion_retrusion": min(profile.amplitude_mm / 3.0, MAX_PROTRUSION_MM),
               "cyclic": profile.amplitude_mm * 0.75}
        theta, phi, slide = np.zeros(n), np.zeros(n), np.zeros((n, 3))
        for k, kind in enumerate(parts):
            tau = t - profile.rest - k * seg
            ramp = min(profile.ramp_s, seg / 3.0)
            th, ph, sl = _segment(kind, amp[kind], profile.amplitude_deg, profile.frequency, tau, seg, ramp)
            theta, phi, slide = theta + th, phi + ph, slide + sl
    else:
        ramp = min(profile.ramp_s, length / 3.0)
        theta, phi, slide = _segment(profile.kind, profile.amplitude_mm, profile.amplitude_deg,
                                     profile.frequency, t - profile.rest, length, ramp)
    return PoseSeries(None, None, sample_rate, t, _hinge_matrices(theta, phi, slide))


def head_motion(t: NDArray, scale: float = 1.0) -> NDArray:
    """Smooth head wobble about the skull frame, (N, 4, 4)."""
    rot_amp = np.radians([3.0, 5.0, 4.0]) * scale
    rot_f = np.array([0.13, 0.21, 0.17])
    tr_amp = np.array([8.0, 5.0, 6.0]) * scale
    tr_f = np.array([0.11, 0.19, 0.23])
    out = np.zeros((t.shape[0], 4, 4))
    for i, ti in enumerate(t):
        out[i, :3, :3] = so3_exp(rot_amp * np.sin(2 * math.pi * rot_f * ti + [0.3, 1.1, 2.0]))
        out[i, :3, 3] = tr_amp * np.sin(2 * math.pi * tr_f * ti + [0.7, 0.2, 1.5])
        out[i, 3, 3] = 1.0
    return out


def default_rig() -> RigGeometry:
    return RigGeometry({
        "MTA": BodyGeometry("MTA", ("MTA1", "MTA2", "MTA3", "MTA4", "MTA5"),
                            np.array([[0.0, 0.0, 0.0], [70.0, 0.0, 0.0], [0.0, 55.0, 0.0],
                                      [24.0, 18.0, 40.0], [60.0, 48.0, 12.0]])),
        "CRA": BodyGeometry("CRA", ("CRA1", "CRA2", "CRA3", "CRA4", "CRA5"),
                            np.array([[0.0, 0.0, 0.0], [110.0, 0.0, 0.0], [0.0, 80.0, 0.0],
                                      [35.0, 28.0, 55.0], [95.0, 70.0, 20.0]])),
        "DP": BodyGeometry("DP", ("DP1", "DP2", "DP3", "DP4"),
                           np.array([[0.0, 0.0, 0.0], [95.0, 0.0, 0.0], [0.0, 72.0, 0.0], [31.0, 26.0, 55.0]]),
                           tip_offset=np.array([20.0, 15.0, -120.0])),
    })


# truth placements of the arrays (never seen by the pipeline)
def _placed(axis, angle_deg, centroid, nominal, parent, child) -> RigidTransform:
    """Transform whose child-frame marker centroid lands at ``centroid``."""
    r = RigidTransform.from_axis_angle(axis, angle_deg).rotation
    return RigidTransform(r, np.asarray(centroid) - r @ nominal.mean(axis=0), parent, child)


_RIG = default_rig()
# MTA just in front of the lower incisors, CRA on the forehead about 10 cm up
_MAND_T_MTA = _placed([0.2, 1.0, 0.1], -25.0, [14.0, 38.0, 8.0], _RIG["MTA"].nominal,
                      FrameId.CS_MAND_ANAT, FrameId.CS_MTA)
_VM_T_CRA = _placed([0.1, 1.0, -0.2], 20.0, [60.0, 0.0, 85.0], _RIG["CRA"].nominal,
                    FrameId.O_VM, FrameId.CS_CRA)
_O_T_VM = RigidTransform.from_axis_angle([0.0, 0.0, 1.0], 30.0, [420.0, 260.0, 1100.0],
                                         FrameId.O_OMOCAP, FrameId.O_VM)


def synthesize_markers(
    rig: RigGeometry,
    timestamps: ArrayLike,
    body_poses: Mapping[str, NDArray],
    noise: float,
    occlusion: Union[float, Mapping[str, float]],
    rng: np.random.Generator,
) -> List[MarkerFrame]:
    """Marker frames from per-body ``^{O}T_{body}`` (N, 4, 4) pose stacks.

    Each coordinate gets i.i.d. N(0, noise^2) and each marker is dropped
    independently with the body's occlusion probability.
    """
    t = np.asarray(timestamps, dtype=np.float64)
    per_body: Dict[str, NDArray] = {}
    for name, poses in body_poses.items():
        body = rig[name]
        pts = np.einsum("nij,mj->nmi", poses[:, :3, :3], body.nominal) + poses[:, None, :3, 3]
        pts = pts + rng.normal(scale=noise, size=pts.shape) if noise > 0 else pts
        p = occlusion.get(name, 0.0) if isinstance(occlusion, Mapping) else occlusion
        hidden = rng.random(pts.shape[:2]) < p
        per_body[name] = np.where(hidden[..., None], np.nan, pts)
    frames = []
    for i, ti in enumerate(t):
        markers = {}
        for name, pts in per_body.items():
            for lab, p in zip(rig[name].labels, pts[i]):
                markers[lab] = None if np.isnan(p[0]) else p
        frames.append(MarkerFrame(float(ti), markers))
    return frames


@dataclass
class SynthSession:
    profile: MotionProfile
    sample_rate: float
    rig: RigGeometry
    seed: int
    noise: float
    occlusion: Union[float, Mapping[str, float]]
    mandibular_landmarks: NDArray  # O_VM, rest
    maxillary_landmarks: NDArray  # O_VM
    model_landmarks: NDArray  # generic model triad given to the pipeline
    truth_mandible: PoseSeries  # ^{O_VM}T_{CS_Mand_Anat}(t)
    truth_head: PoseSeries  # ^{O_OMoCap}T_{O_VM}(t)
    truth_static: RigidTransform  # ^{CS_MTA}T_{CS_Mand_Anat}
    truth_registration: RigidTransform  # ^{O_VM}T_{CS_CRA}
    incisal_point: NDArray  # CS_Mand_Anat
    calibration_frames: List[MarkerFrame] = field(default_factory=list)
    motion_frames: List[MarkerFrame] = field(default_factory=list)
    truth_mta: Optional[PoseSeries] = None
    truth_cra: Optional[PoseSeries] = None


def _digitization_poses(rig: RigGeometry, targets_vm: NDArray, head: NDArray,
                        dwell: int, travel: int) -> NDArray:
    """DP poses for touching each target in turn; returns (N, 4, 4) in O_OMoCap."""
    tip = rig["DP"].tip_offset
    # pointer held roughly upright, handle tilted forward; a fixed pose per landmark
    orientations = [so3_exp(np.radians([10.0 * np.cos(k), 15.0 + 5.0 * k, 25.0 * np.sin(k)]))
                    for k in range(len(targets_vm))]
    away = targets_vm[2] + np.array([60.0, 0.0, 30.0])
    path_t, path_r = [], []

    def travel_to(p0, r0, p1, r1, frames):
        for s in np.arange(1, frames + 1) / (frames + 1):
            lift = math.sin(math.pi * s) * np.array([35.0, 0.0, 15.0])
            path_t.append((1 - s) * p0 + s * p1 + lift)
            path_r.append(r0 @ so3_exp(s * so3_log(r0.T @ r1)))

    prev_p, prev_r = away, orientations[0]
    for k, (p, r) in enumerate(zip(targets_vm, orientations)):
        travel_to(prev_p, prev_r, p, r, travel)
        for _ in range(dwell):
            path_t.append(p.copy())
            path_r.append(r)
        prev_p, prev_r = p, r
    travel_to(prev_p, prev_r, away, prev_r, travel)
    n = len(path_t)
    out = np.zeros((n, 4, 4))
    for i in range(n):
        r_vm = path_r[i]
        tip_vm = path_t[i]
        dp_vm = np.eye(4)
        dp_vm[:3, :3] = r_vm
        dp_vm[:3, 3] = tip_vm - r_vm @ tip
        out[i] = head[min(i, head.shape[0] - 1)] @ dp_vm
    return out


def synthesize_session(
    profile: MotionProfile = MotionProfile(),
    noise: float = 0.0,
    occlusion: Union[float, Mapping[str, float]] = 0.0,
    seed: int = 0,
    sample_rate: float = 200.0,
    head_scale: float = 1.0,
    model_scale: float = 1.0,
    rig: Optional[RigGeometry] = None,
    dwell_frames: int = 80,
    travel_frames: int = 40,
) -> SynthSession:
    """Calibration and motion recordings of one synthetic subject."""
    rng = np.random.default_rng(seed)
    rig = default_rig() if rig is None else rig
    mand_rest = anatomical_frame(MANDIBULAR_LANDMARKS, FrameId.O_VM, FrameId.CS_MAND_ANAT)
    incisal = invert(mand_rest).apply(MANDIBULAR_LANDMARKS[2])
    vm_t_j = np.eye(4)
    vm_t_j[:3, 3] = MANDIBULAR_LANDMARKS[2]
    j_t_vm = np.linalg.inv(vm_t_j)

    jaw = generate_motion(profile, sample_rate)
    t = jaw.timestamps
    mand = vm_t_j @ jaw.matrices @ j_t_vm @ mand_rest.matrix
    head = _O_T_VM.matrix @ head_motion(t, head_scale)
    o_mta = head @ mand @ _MAND_T_MTA.matrix
    o_cra = head @ _VM_T_CRA.matrix
    motion_frames = synthesize_markers(rig, t, {"MTA": o_mta, "CRA": o_cra}, noise, occlusion, rng)

    # calibration recording with the jaw closed and the head wobbling
    targets = np.vstack([MANDIBULAR_LANDMARKS, MAXILLARY_LANDMARKS])
    n_cal = 6 * (dwell_frames + travel_frames) + travel_frames
    t_cal = np.arange(n_cal) / sample_rate
    head_cal = _O_T_VM.matrix @ head_motion(t_cal + 100.0, head_scale)
    dp = _digitization_poses(rig, targets, head_cal, dwell_frames, travel_frames)
    cal_frames = synthesize_markers(
        rig, t_cal,
        {"MTA": head_cal @ mand_rest.matrix @ _MAND_T_MTA.matrix,
         "CRA": head_cal @ _VM_T_CRA.matrix, "DP": dp},
        noise, occlusion, rng,
    )

    centroid = MAXILLARY_LANDMARKS.mean(axis=0)
    model = centroid + model_scale * (MAXILLARY_LANDMARKS - centroid)
    return SynthSession(
        profile=profile, sample_rate=sample_rate, rig=rig, seed=seed, noise=noise, occlusion=occlusion,
        mandibular_landmarks=MANDIBULAR_LANDMARKS.copy(), maxillary_landmarks=MAXILLARY_LANDMARKS.copy(),
        model_landmarks=model,
        truth_mandible=PoseSeries(FrameId.O_VM, FrameId.CS_MAND_ANAT, sample_rate, t, mand),
        truth_head=PoseSeries(FrameId.O_OMOCAP, FrameId.O_VM, sample_rate, t, head),
        truth_static=invert(_MAND_T_MTA),
        truth_registration=_VM_T_CRA,
        incisal_point=incisal,
        calibration_frames=cal_frames,
        motion_frames=motion_frames,
        truth_mta=PoseSeries(FrameId.O_OMOCAP, FrameId.CS_MTA, sample_rate, t, o_mta),
        truth_cra=PoseSeries(FrameId.O_OMOCAP, FrameId.CS_CRA, sample_rate, t, o_cra),
    )


@dataclass(frozen=True)
class TruthError:
    max_translation: float  # mm
    mean_translation: float  # mm
    max_rotation: float  # deg
    mean_rotation: float  # deg
    sample_count: int


def evaluate_against_truth(samples: Sequence[JawPoseSample], truth: PoseSeries) -> TruthError:
    """Per-sample pose error of pipeline output against a ground-truth series."""
    if not samples:
        raise AlignmentError("no samples to evaluate")
    t = np.array([s.timestamp for s in samples])
    idx = np.clip(np.searchsorted(truth.timestamps, t), 0, len(truth) - 1)
    left = np.clip(idx - 1, 0, len(truth) - 1)
    idx = np.where(np.abs(truth.timestamps[left] - t) < np.abs(truth.timestamps[idx] - t), left, idx)
    if np.any(np.abs(truth.timestamps[idx] - t) > 0.5 / truth.sample_rate):
        raise AlignmentError("samples fall outside the ground-truth time base")
    dt, dr = np.empty(len(samples)), np.empty(len(samples))
    for k, (s, i) in enumerate(zip(samples, idx)):
        m = truth.matrices[i]
        if np.isnan(m[0, 0]):
            raise AlignmentError(f"ground truth missing at t={t[k]:.4f} s")
        dt[k] = np.linalg.norm(s.pose.translation - m[:3, 3])
        dr[k] = math.degrees(rotation_angle_rad(s.pose.rotation.T @ m[:3, :3]))
    return TruthError(float(dt.max()), float(dt.mean()), float(dr.max()), float(dr.mean()), len(samples))
