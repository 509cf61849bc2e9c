"""Session archive in HDF5.

Layout (schema ``jawkin-schema = 1`` on the root group)::

    /meta                         attrs: sample_rate, software_version, seed, rig_yaml, ...
    /calibration                  attrs: complete, registration_rms
        static_mta_to_mand        (4, 4)
        model_registration        (4, 4)
        incisal_point             (3,)
        landmarks/{mandibular,maxillary,model}   (3, 3)
        digitized/{position,std,n_frames,window,reference}
    /raw/{mta,cra}/{timestamps,poses,rms,filled}
    /processed/{timestamps,poses,quality}
    /filtered/{timestamps,poses}  attrs: method and parameters
    /truth/<name>/{timestamps,poses}
    /trajectories/<name>/{timestamps,points}
    /reports/<name>               attrs

Poses are (N, 4, 4) float64 homogeneous matrices (NaN blocks for gaps) and
timestamps float64 seconds. Every dataset carries a ``units`` attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import h5py
import numpy as np

from . import __version__
from .acquisition import PoseSeries
from .analysis import PrecisionReport
from .calibration import CalibrationState, DigitizedLandmark, LandmarkSet
from .errors import CorruptFileError, MissingGroupError, VersionMismatchError
from .kinematics import JawPoseSample, Trajectory3
from .rigid import FrameId, RigidTransform

SCHEMA_KEY = "jawkin-schema"
SCHEMA_VERSION = 1

POSE_UNITS = "homogeneous 4x4; rotation dimensionless, translation mm"


@dataclass
class FilteredSeries:
    timestamps: np.ndarray
    poses: np.ndarray  # (N, 4, 4)
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SessionArchive:
    calibration: Optional[CalibrationState] = None
    raw: Dict[str, PoseSeries] = field(default_factory=dict)
    processed: Optional[List[JawPoseSample]] = None
    filtered: Optional[FilteredSeries] = None
    truth: Dict[str, PoseSeries] = field(default_factory=dict)
    trajectories: Dict[str, Trajectory3] = field(default_factory=dict)
    reports: Dict[str, Union[PrecisionReport, Dict[str, Any]]] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)


def _frame(v: Optional[str]) -> Optional[FrameId]:
    return None if v in (None, "") else FrameId(v)


def _put(group: h5py.Group, name: str, data, units: str) -> h5py.Dataset:
    ds = group.create_dataset(name, data=np.asarray(data))
    ds.attrs["units"] = units
    return ds


def _write_series(group: h5py.Group, series: PoseSeries) -> None:
    group.attrs["parent"] = "" if series.parent is None else series.parent.value
    group.attrs["child"] = "" if series.child is None else series.child.value
    group.attrs["sample_rate"] = series.sample_rate
    group.attrs["sample_rate_units"] = "Hz"
    _put(group, "timestamps", series.timestamps, "s")
    _put(group, "poses", series.matrices, POSE_UNITS)
    _put(group, "rms", series.rms, "mm")
    _put(group, "filled", series.filled, "flag")


def _read_series(group: h5py.Group) -> PoseSeries:
    return PoseSeries(_frame(group.attrs["parent"]), _frame(group.attrs["child"]),
                      float(group.attrs["sample_rate"]), group["timestamps"][()],
                      group["poses"][()], group["rms"][()], group["filled"][()])


def _write_calibration(g: h5py.Group, c: CalibrationState) -> None:
    g.attrs["complete"] = bool(c.complete)
    g.attrs["registration_rms"] = c.registration_rms
    g.attrs["registration_rms_units"] = "mm"
    if c.static_mta_to_mand is not None:
        _put(g, "static_mta_to_mand", c.static_mta_to_mand.matrix, POSE_UNITS)
    if c.model_registration is not None:
        _put(g, "model_registration", c.model_registration.matrix, POSE_UNITS)
    if c.incisal_point is not None:
        _put(g, "incisal_point", c.incisal_point, "mm")
    lm = g.create_group("landmarks")
    if c.landmarks is not None:
        _put(lm, "mandibular", c.landmarks.mandibular, "mm").attrs["frame"] = c.landmarks.mandibular_frame.value
        _put(lm, "maxillary", c.landmarks.maxillary, "mm").attrs["frame"] = c.landmarks.maxillary_frame.value
    if c.model_landmarks is not None:
        _put(lm, "model", c.model_landmarks, "mm").attrs["frame"] = FrameId.O_VM.value
    d = g.create_group("digitized")
    n = len(c.digitized)
    _put(d, "position", np.array([x.position for x in c.digitized]).reshape(n, 3), "mm")
    _put(d, "std", np.array([x.std for x in c.digitized], dtype=float), "mm")
    _put(d, "n_frames", np.array([x.n_frames for x in c.digitized], dtype=np.int64), "frames")
    _put(d, "window", np.array([[x.t_start, x.t_end] for x in c.digitized], dtype=float).reshape(n, 2), "s")
    _put(d, "reference", np.array([x.reference for x in c.digitized], dtype="S8"), "body name")


def _read_calibration(g: h5py.Group) -> CalibrationState:
    def tf(name, parent, child):
        return RigidTransform.from_matrix(g[name][()], parent, child) if name in g else None

    d = g["digitized"]
    digitized = [
        DigitizedLandmark(p, float(s), int(n), float(w[0]), float(w[1]), r.decode())
        for p, s, n, w, r in zip(d["position"][()], d["std"][()], d["n_frames"][()],
                                 d["window"][()], d["reference"][()])
    ]
    lm = g["landmarks"]
    landmarks = LandmarkSet(lm["mandibular"][()], lm["maxillary"][()]) if "mandibular" in lm else None
    return CalibrationState(
        static_mta_to_mand=tf("static_mta_to_mand", FrameId.CS_MTA, FrameId.CS_MAND_ANAT),
        model_registration=tf("model_registration", FrameId.O_VM, FrameId.CS_CRA),
        incisal_point=g["incisal_point"][()] if "incisal_point" in g else None,
        landmarks=landmarks,
        model_landmarks=lm["model"][()] if "model" in lm else None,
        registration_rms=float(g.attrs["registration_rms"]),
        digitized=digitized,
        complete=bool(g.attrs["complete"]),
    )


def _attr_value(v):
    if isinstance(v, bytes):
        return v.decode()
    if isinstance(v, np.generic):
        return v.item()
    return v


def save_session(archive: SessionArchive, path: Union[str, Path]) -> None:
    """Write ``archive`` to ``path``, replacing any existing file."""
    with h5py.File(path, "w") as f:
        f.attrs[SCHEMA_KEY] = SCHEMA_VERSION
        meta = f.create_group("meta")
        meta.attrs["software_version"] = __version__
        for k, v in archive.meta.items():
            if k != "software_version" and v is not None:
                meta.attrs[k] = v
        if archive.calibration is not None:
            _write_calibration(f.create_group("calibration"), archive.calibration)
        if archive.raw:
            raw = f.create_group("raw")
            for name, series in archive.raw.items():
                _write_series(raw.create_group(name), series)
        if archive.processed is not None:
            g = f.create_group("processed")
            s = archive.processed
            _put(g, "timestamps", np.array([x.timestamp for x in s], dtype=float), "s")
            _put(g, "poses", np.array([x.pose.matrix for x in s]).reshape(len(s), 4, 4), POSE_UNITS)
            _put(g, "quality", np.array([x.quality for x in s], dtype=float), "mm")
            g.attrs["frame"] = "O_VM->CS_Mand_Anat"
        if archive.filtered is not None:
            g = f.create_group("filtered")
            _put(g, "timestamps", archive.filtered.timestamps, "s")
            _put(g, "poses", archive.filtered.poses, POSE_UNITS)
            for k, v in archive.filtered.params.items():
                g.attrs[k] = v
        if archive.truth:
            g = f.create_group("truth")
            for name, series in archive.truth.items():
                _write_series(g.create_group(name), series)
        if archive.trajectories:
            g = f.create_group("trajectories")
            for name, traj in archive.trajectories.items():
                tg = g.create_group(name)
                tg.attrs["label"] = traj.label
                tg.attrs["frame"] = FrameId.O_VM.value
                _put(tg, "timestamps", traj.timestamps, "s")
                _put(tg, "points", traj.points, "mm")
        if archive.reports:
            g = f.create_group("reports")
            for name, rep in archive.reports.items():
                rg = g.create_group(name)
                if isinstance(rep, PrecisionReport):
                    rg.attrs["kind"] = "precision"
                    d = rep.to_dict()
                    chan = d.pop("channel_rms")
                    for k, v in d.items():
                        rg.attrs[k] = v
                    rg.attrs["units"] = "translation_*: um, rotation_*: deg, cutoff_used: Hz"
                    ds = _put(rg, "channel_rms", np.array(list(chan.values()), dtype=float),
                              "tx,ty,tz: mm; rx,ry,rz: deg")
                    ds.attrs["channels"] = ",".join(chan)
                else:
                    rg.attrs["kind"] = "mapping"
                    for k, v in rep.items():
                        rg.attrs[k] = v


def _open(path: Union[str, Path]) -> h5py.File:
    if not Path(path).is_file():
        raise FileNotFoundError(2, "no such session file", str(path))
    try:
        f = h5py.File(path, "r")
    except OSError as exc:
        raise CorruptFileError(f"{path}: not a readable HDF5 file ({exc})") from exc
    if SCHEMA_KEY not in f.attrs:
        f.close()
        raise VersionMismatchError(f"{path}: no {SCHEMA_KEY} attribute")
    version = int(f.attrs[SCHEMA_KEY])
    if version != SCHEMA_VERSION:
        f.close()
        raise VersionMismatchError(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")
    return f


def load_session(path: Union[str, Path]) -> SessionArchive:
    with _open(path) as f:
        if "meta" not in f:
            raise MissingGroupError(f"{path}: missing /meta")
        try:
            arch = SessionArchive(meta={k: _attr_value(v) for k, v in f["meta"].attrs.items()})
            if "calibration" in f:
                arch.calibration = _read_calibration(f["calibration"])
            if "raw" in f:
                arch.raw = {k: _read_series(g) for k, g in f["raw"].items()}
            if "processed" in f:
                g = f["processed"]
                arch.processed = [
                    JawPoseSample(float(t), RigidTransform.from_matrix(m, FrameId.O_VM, FrameId.CS_MAND_ANAT), float(q))
                    for t, m, q in zip(g["timestamps"][()], g["poses"][()], g["quality"][()])
                ]
            if "filtered" in f:
                g = f["filtered"]
                arch.filtered = FilteredSeries(g["timestamps"][()], g["poses"][()],
                                               {k: _attr_value(v) for k, v in g.attrs.items()})
            if "truth" in f:
                arch.truth = {k: _read_series(g) for k, g in f["truth"].items()}
            if "trajectories" in f:
                arch.trajectories = {
                    k: Trajectory3(str(_attr_value(g.attrs["label"])), g["timestamps"][()], g["points"][()])
                    for k, g in f["trajectories"].items()
                }
            if "reports" in f:
                for k, g in f["reports"].items():
                    attrs = {a: _attr_value(v) for a, v in g.attrs.items()}
                    kind = attrs.pop("kind", "mapping")
                    if kind == "precision":
                        attrs.pop("units", None)
                        names = str(_attr_value(g["channel_rms"].attrs["channels"])).split(",")
                        attrs["channel_rms"] = dict(zip(names, (float(v) for v in g["channel_rms"][()])))
                        arch.reports[k] = PrecisionReport.from_dict(attrs)
                    else:
                        arch.reports[k] = attrs
        except KeyError as exc:
            raise MissingGroupError(f"{path}: {exc}") from exc
    return arch
