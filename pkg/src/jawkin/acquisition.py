"""Marker data ingestion and per-frame rigid-body pose reconstruction.

Marker CSV layout (one row per capture frame)::

    # units: timestamp=s, coordinates=mm
    timestamp,MTA1_x,MTA1_y,MTA1_z,MTA2_x,...
    0.000,12.1,-3.4,55.0,...

Empty cells mark an occluded marker. The ``# units`` comment is optional on
input and always written on output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ConfigError,
    DegenerateGeometryError,
    EmptyRecordingError,
    OcclusionError,
    UnknownLabelError,
)
from .rigid import (
    EPS_AREA,
    Frame,
    FrameId,
    RigidTransform,
    as_point,
    as_points,
    interpolate_pose,
    kabsch_fit,
)

MAX_GAP_FRAMES = 10
MAX_FIT_RMS_MM = 2.0

BODY_FRAMES = {"MTA": FrameId.CS_MTA, "CRA": FrameId.CS_CRA, "DP": FrameId.CS_DP}

_LENGTH_UNITS = {"mm": 1.0, "cm": 10.0, "m": 1000.0}


@dataclass(frozen=True)
class MarkerFrame:
    """Labelled marker positions (mm) captured at ``timestamp`` (s).

    A value of ``None`` marks an occluded marker.
    """

    timestamp: float
    markers: Mapping[str, Optional[NDArray[np.float64]]]

    def visible(self, labels: Iterable[str]) -> List[str]:
        return [lab for lab in labels if self.markers.get(lab) is not None]


@dataclass(frozen=True)
class BodyGeometry:
    """Nominal marker layout of one tracked body, in the body's own frame."""

    name: str
    labels: Tuple[str, ...]
    nominal: NDArray[np.float64]
    tip_offset: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        nominal = as_points(self.nominal)
        if len(self.labels) != nominal.shape[0]:
            raise ConfigError(f"{self.name}: {len(self.labels)} labels for {nominal.shape[0]} markers")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError(f"{self.name}: duplicate marker labels")
        if nominal.shape[0] < 3:
            raise DegenerateGeometryError(f"{self.name}: need at least 3 markers")
        centred = nominal - nominal.mean(axis=0)
        sv = np.linalg.svd(centred, compute_uv=False)
        if sv[0] * sv[1] < EPS_AREA:
            raise DegenerateGeometryError(f"{self.name}: nominal markers are collinear")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "nominal", nominal)
        if self.tip_offset is not None:
            object.__setattr__(self, "tip_offset", as_point(self.tip_offset))

    @property
    def frame_id(self) -> Frame:
        return BODY_FRAMES.get(self.name)


@dataclass(frozen=True)
class RigGeometry:
    bodies: Mapping[str, BodyGeometry]

    def __post_init__(self) -> None:
        seen: Dict[str, str] = {}
        for body in self.bodies.values():
            for lab in body.labels:
                if lab in seen:
                    raise ConfigError(f"marker label {lab!r} used by {seen[lab]} and {body.name}")
                seen[lab] = body.name

    def __getitem__(self, name: str) -> BodyGeometry:
        try:
            return self.bodies[name]
        except KeyError:
            raise ConfigError(f"rig has no body named {name!r}") from None

    @property
    def labels(self) -> List[str]:
        return [lab for body in self.bodies.values() for lab in body.labels]

    def check_labels(self, frame: MarkerFrame) -> None:
        known = set(self.labels)
        unknown = [lab for lab in frame.markers if lab not in known]
        if unknown:
            raise UnknownLabelError(f"markers not in the rig: {', '.join(sorted(unknown))}")


@dataclass
class PoseSeries:
    """Regularly sampled sequence of ``^{parent}T_{child}`` poses with gaps.

    Gaps are NaN blocks in ``matrices``; ``filled`` flags samples produced by
    interpolation and ``rms`` holds the per-frame marker fit residual (mm).
    """

    parent: Frame
    child: Frame
    sample_rate: float
    timestamps: NDArray[np.float64]
    matrices: NDArray[np.float64]
    rms: NDArray[np.float64] = None
    filled: NDArray[np.bool_] = None

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        n = self.timestamps.shape[0]
        if self.matrices.shape != (n, 4, 4):
            raise ValueError(f"matrices must be ({n}, 4, 4), got {self.matrices.shape}")
        self.rms = np.full(n, np.nan) if self.rms is None else np.asarray(self.rms, dtype=np.float64)
        self.filled = np.zeros(n, bool) if self.filled is None else np.asarray(self.filled, dtype=bool)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if n > 1:
            dt = np.diff(self.timestamps)
            if np.any(dt <= 0):
                raise ValueError("timestamps must be strictly increasing")
            period = 1.0 / self.sample_rate
            if np.any(np.abs(dt - period) >= 0.1 * period):
                raise ValueError("sample spacing deviates from 1/sample_rate by 10% or more")

    @classmethod
    def from_poses(
        cls,
        timestamps: ArrayLike,
        poses: Sequence[Optional[RigidTransform]],
        sample_rate: float,
        parent: Frame = None,
        child: Frame = None,
        rms: Optional[ArrayLike] = None,
    ) -> PoseSeries:
        mats = np.full((len(poses), 4, 4), np.nan)
        for i, p in enumerate(poses):
            if p is not None:
                mats[i] = p.matrix
                parent = parent if parent is not None else p.parent
                child = child if child is not None else p.child
        return cls(parent, child, sample_rate, np.asarray(timestamps, float), mats, rms)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def valid(self) -> NDArray[np.bool_]:
        return ~np.isnan(self.matrices[:, 0, 0])

    def pose(self, i: int) -> Optional[RigidTransform]:
        m = self.matrices[i]
        if np.isnan(m[0, 0]):
            return None
        return RigidTransform.from_matrix(m, self.parent, self.child)

    def poses(self) -> List[Optional[RigidTransform]]:
        return [self.pose(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[Tuple[float, Optional[RigidTransform]]]:
        for i in range(len(self)):
            yield float(self.timestamps[i]), self.pose(i)

    def transformed(self, left: Optional[Sequence[RigidTransform]] = None,
                    right: Optional[RigidTransform] = None) -> PoseSeries:
        """Series with every pose pre-multiplied by ``left[i]`` and/or post-multiplied by ``right``."""
        mats = self.matrices.copy()
        if left is not None:
            mats = np.stack([lt.matrix for lt in left]) @ mats
        if right is not None:
            mats = mats @ right.matrix
        return PoseSeries(self.parent, self.child, self.sample_rate, self.timestamps.copy(),
                          mats, self.rms.copy(), self.filled.copy())


def _body_points(frame: MarkerFrame, body: BodyGeometry) -> Tuple[NDArray, NDArray]:
    idx = [i for i, lab in enumerate(body.labels) if frame.markers.get(lab) is not None]
    observed = np.array([frame.markers[body.labels[i]] for i in idx], dtype=np.float64).reshape(-1, 3)
    return body.nominal[idx], observed


def fit_body_pose(
    frame: MarkerFrame,
    body: BodyGeometry,
    rig: Optional[RigGeometry] = None,
    max_rms: Optional[float] = MAX_FIT_RMS_MM,
) -> Tuple[Optional[RigidTransform], float]:
    """Pose ``^{O_OMoCap}T_{body}`` from the visible markers of one frame.

    Returns ``(None, nan)`` when fewer than three markers are visible, and
    ``(None, rms)`` when the fit residual exceeds ``max_rms``.
    """
    if rig is not None:
        rig.check_labels(frame)
    local, observed = _body_points(frame, body)
    if local.shape[0] < 3:
        return None, math.nan
    pose, rms = kabsch_fit(local, observed, FrameId.O_OMOCAP, body.frame_id)
    if max_rms is not None and rms > max_rms:
        return None, rms
    return pose, rms


def infer_sample_rate(timestamps: ArrayLike) -> float:
    t = np.asarray(timestamps, dtype=np.float64)
    if t.shape[0] < 2:
        raise EmptyRecordingError("need at least two frames to infer the sample rate")
    return float(1.0 / np.median(np.diff(t)))


def fill_gaps(series: PoseSeries, max_gap_frames: int = MAX_GAP_FRAMES) -> PoseSeries:
    """Interpolate interior gaps of at most ``max_gap_frames`` samples.

    Samples outside gaps are copied unchanged.
    """
    mats = series.matrices.copy()
    filled = series.filled.copy()
    valid = series.valid
    t = series.timestamps
    n = len(series)
    i = 0
    while i < n:
        if valid[i]:
            i += 1
            continue
        j = i
        while j < n and not valid[j]:
            j += 1
        if i > 0 and j < n and (j - i) <= max_gap_frames:
            a, b = series.pose(i - 1), series.pose(j)
            for k in range(i, j):
                s = (t[k] - t[i - 1]) / (t[j] - t[i - 1])
                mats[k] = interpolate_pose(a, b, s).matrix
                filled[k] = True
        i = j
    return PoseSeries(series.parent, series.child, series.sample_rate, t.copy(), mats,
                      series.rms.copy(), filled)


def track_body(
    frames: Sequence[MarkerFrame],
    body: BodyGeometry,
    rig: Optional[RigGeometry] = None,
    max_gap_frames: int = MAX_GAP_FRAMES,
    max_rms: Optional[float] = MAX_FIT_RMS_MM,
    sample_rate: Optional[float] = None,
) -> PoseSeries:
    """Per-frame pose fit followed by short-gap interpolation."""
    if not frames:
        raise EmptyRecordingError(f"no frames to track {body.name}")
    t = np.array([f.timestamp for f in frames], dtype=np.float64)
    keep = np.concatenate([[True], np.diff(t) > 0])
    if np.any(np.diff(t) < 0):
        raise ValueError("frames are not time-ordered")
    frames = [f for f, k in zip(frames, keep) if k]
    t = t[keep]
    fs = sample_rate if sample_rate is not None else (infer_sample_rate(t) if len(t) > 1 else 1.0)
    poses, rms = [], np.full(len(frames), np.nan)
    for i, f in enumerate(frames):
        pose, rms[i] = fit_body_pose(f, body, rig, max_rms)
        poses.append(pose)
    series = PoseSeries.from_poses(t, poses, fs, FrameId.O_OMOCAP, body.frame_id, rms)
    return fill_gaps(series, max_gap_frames)


def pointer_tip_position(frame: MarkerFrame, rig: RigGeometry, pointer: str = "DP") -> NDArray[np.float64]:
    """Pointer tip in capture coordinates, ``^{O}T_{CS_DP} . tip_offset``."""
    body = rig[pointer]
    if body.tip_offset is None:
        raise ConfigError(f"{pointer} has no tip_offset")
    pose, _ = fit_body_pose(frame, body)
    if pose is None:
        raise OcclusionError(f"{pointer} pose not recoverable at t={frame.timestamp:.4f} s")
    return pose.apply(body.tip_offset)


# files -------------------------------------------------------------------


def read_marker_csv(path: Union[str, Path], rig: Optional[RigGeometry] = None) -> List[MarkerFrame]:
    """Load a marker CSV; frames with no visible marker are dropped."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise EmptyRecordingError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    if header[0].strip().lower() != "timestamp" or (len(header) - 1) % 3:
        raise ValueError(f"{path}: header must be 'timestamp' followed by label_x,label_y,label_z triples")
    labels = []
    for k in range(1, len(header), 3):
        stems = [h.strip().rsplit("_", 1) for h in header[k:k + 3]]
        if any(len(s) != 2 for s in stems) or [s[1] for s in stems] != ["x", "y", "z"] \
                or len({s[0] for s in stems}) != 1:
            raise ValueError(f"{path}: malformed marker columns {header[k:k + 3]}")
        labels.append(stems[0][0])
    if rig is not None:
        unknown = sorted(set(labels) - set(rig.labels))
        if unknown:
            raise UnknownLabelError(f"markers not in the rig: {', '.join(unknown)}")
    frames = []
    for row in body:
        row = row + [""] * (len(header) - len(row))
        markers: Dict[str, Optional[NDArray[np.float64]]] = {}
        for j, lab in enumerate(labels):
            cells = [c.strip() for c in row[1 + 3 * j:4 + 3 * j]]
            if any(c == "" for c in cells):
                markers[lab] = None
            else:
                markers[lab] = np.array([float(c) for c in cells])
        if any(v is not None for v in markers.values()):
            frames.append(MarkerFrame(float(row[0]), markers))
    if not frames:
        raise EmptyRecordingError(f"{path}: no frames with visible markers")
    return frames


def write_marker_csv(path: Union[str, Path], frames: Sequence[MarkerFrame],
                     labels: Optional[Sequence[str]] = None) -> None:
    if labels is None:
        labels = []
        for f in frames:
            labels.extend(lab for lab in f.markers if lab not in labels)
    with Path(path).open("w", newline="") as fh:
        fh.write("# units: timestamp=s, coordinates=mm\n")
        w = csv.writer(fh)
        w.writerow(["timestamp"] + [f"{lab}_{ax}" for lab in labels for ax in "xyz"])
        for f in frames:
            row = [repr(float(f.timestamp))]
            for lab in labels:
                p = f.markers.get(lab)
                row.extend(["", "", ""] if p is None else [repr(float(v)) for v in p])
            w.writerow(row)


def rig_to_dict(rig: RigGeometry) -> dict:
    bodies = {}
    for name, body in rig.bodies.items():
        entry = {"markers": {lab: [float(v) for v in p] for lab, p in zip(body.labels, body.nominal)}}
        if body.tip_offset is not None:
            entry["tip_offset"] = [float(v) for v in body.tip_offset]
        bodies[name] = entry
    return {"units": {"length": "mm"}, "bodies": bodies}


def rig_from_dict(data: Mapping) -> RigGeometry:
    try:
        unit = (data.get("units") or {}).get("length", "mm")
        scale = _LENGTH_UNITS[unit]
    except KeyError:
        raise ConfigError(f"unsupported length unit {unit!r}") from None
    if "bodies" not in data:
        raise ConfigError("rig config has no 'bodies' section")
    bodies = {}
    for name, entry in data["bodies"].items():
        markers = entry.get("markers") or {}
        labels = tuple(markers)
        nominal = np.array([markers[lab] for lab in labels], dtype=np.float64) * scale
        tip = entry.get("tip_offset")
        bodies[name] = BodyGeometry(name, labels, nominal,
                                    None if tip is None else np.asarray(tip, float) * scale)
    return RigGeometry(bodies)


def load_rig(path: Union[str, Path]) -> RigGeometry:
    with Path(path).open() as fh:
        return rig_from_dict(yaml.safe_load(fh) or {})


def save_rig(rig: RigGeometry, path: Union[str, Path], extra: Optional[Mapping] = None) -> None:
    data = rig_to_dict(rig)
    if extra:
        data.update(extra)
    with Path(path).open("w") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)
