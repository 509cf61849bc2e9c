"""Command-line entry point: ``jawkin {synth,calibrate,process,analyze,plot}``.

Failures print one line ``error: <code>: <message>`` to stderr and exit
with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .acquisition import read_marker_csv, rig_from_dict, save_rig, write_marker_csv
from .analysis import residual_precision
from .calibration import LANDMARK_ORDER, calibrate_session, calibration_report
from .config import load_config, read_yaml, section
from .errors import ConfigError, JawkinError, MissingGroupError
from .filtering import (
    butterworth_lowpass_bidirectional,
    estimate_cutoff_snr,
    pose_to_signal,
    savgol_bidirectional,
    signal_to_poses,
)
from .kinematics import JawPoseSample, Trajectory3, contiguous_runs, process_session, reference_trajectory
from .pipeline import track_pair
from .plotting import export_plot_data
from .storage import FilteredSeries, SessionArchive, load_session, save_session
from .synth import KINDS, MotionProfile, evaluate_against_truth, synthesize_session

EXIT_ERROR = 2


def _cutoff_arg(value: str):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cutoff must be a number of Hz or 'auto', got {value!r}")


def _model_landmarks(rig_data: dict) -> np.ndarray:
    vm = rig_data.get("virtual_model")
    if not vm or "maxillary_landmarks" not in vm:
        raise ConfigError("rig config has no virtual_model.maxillary_landmarks section")
    unit = (vm.get("units") or {}).get("length", "mm")
    scale = {"mm": 1.0, "cm": 10.0, "m": 1000.0}.get(unit)
    if scale is None:
        raise ConfigError(f"unsupported length unit {unit!r}")
    lm = vm["maxillary_landmarks"]
    try:
        return np.array([lm[name] for name in LANDMARK_ORDER], dtype=float) * scale
    except KeyError as exc:
        raise ConfigError(f"virtual_model.maxillary_landmarks lacks {exc}") from None


# synth --------------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profile = MotionProfile(kind=args.profile, amplitude_mm=args.amplitude, amplitude_deg=args.amplitude_deg,
                            frequency=args.frequency, duration=args.duration)
    sess = synthesize_session(profile, noise=args.noise, occlusion=args.occlusion, seed=args.seed,
                              sample_rate=args.sample_rate)
    write_marker_csv(out / "calibration_markers.csv", sess.calibration_frames, sess.rig.labels)
    write_marker_csv(out / "motion_markers.csv", sess.motion_frames, sess.rig.labels)
    model = {name: [float(v) for v in p] for name, p in zip(LANDMARK_ORDER, sess.model_landmarks)}
    save_rig(sess.rig, out / "rig.yaml", {
        "virtual_model": {"units": {"length": "mm"}, "frame": "O_VM", "maxillary_landmarks": model},
    })
    truth = SessionArchive(
        truth={"mandible": sess.truth_mandible, "head": sess.truth_head,
               "mta": sess.truth_mta, "cra": sess.truth_cra},
        meta={"sample_rate": sess.sample_rate, "seed": sess.seed, "noise_mm": float(args.noise),
              "occlusion": float(args.occlusion), "profile": json.dumps(profile.__dict__),
              "kind": "ground-truth"},
    )
    save_session(truth, out / "ground_truth.h5")
    print(f"wrote {len(sess.calibration_frames)} calibration and {len(sess.motion_frames)} motion frames "
          f"to {out} (profile {args.profile}, noise {args.noise} mm, seed {args.seed})")
    return 0


# calibrate ----------------------------------------------------------------


def cmd_calibrate(args, cfg) -> int:
    rig_data = read_yaml(args.rig)
    rig = rig_from_dict(rig_data)
    model = _model_landmarks(rig_data)
    frames = read_marker_csv(args.markers, rig)
    c = section(cfg, "calibration")
    state = calibrate_session(frames, rig, model, still_min_frames=int(c.get("still_min", 40)),
                              still_tol=float(c.get("still_tol", 0.2)),
                              warn_mm=float(c.get("registration_warn", 2.0)),
                              order=tuple(c.get("landmark_order", LANDMARK_ORDER)))
    sample_rate = 1.0 / float(np.median(np.diff([f.timestamp for f in frames])))
    archive = SessionArchive(calibration=state, meta={
        "sample_rate": sample_rate, "rig_yaml": yaml.safe_dump(rig_data, sort_keys=False),
        "calibration_markers": str(args.markers),
    })
    save_session(archive, args.out)
    print(calibration_report(state))
    state.require_complete()
    return 0


# process ------------------------------------------------------------------


def _filter_runs(samples: List[JawPoseSample], fs: float, method: str, cutoff, cfg) -> Optional[FilteredSeries]:
    f = section(cfg, "filtering")
    runs = contiguous_runs(samples, fs)
    if method == "none":
        return None
    if method == "savgol":
        window, order = int(f.get("savgol_window", 21)), int(f.get("savgol_order", 3))
        usable = [r for r in runs if len(r) >= window]
        params = {"method": "savgol", "window": window, "poly_order": order, "window_units": "samples"}

        def run_filter(sig):
            return savgol_bidirectional(sig, window, order)
    else:
        order = int(f.get("butterworth_order", 4))
        usable = [r for r in runs if len(r) > 3 * (order + 1)]
        if cutoff == "auto":
            longest = max(runs, key=len)
            cutoff = estimate_cutoff_snr(pose_to_signal(longest, fs))
        params = {"method": "butterworth", "order": order, "cutoff": float(cutoff), "cutoff_units": "Hz"}

        def run_filter(sig):
            return butterworth_lowpass_bidirectional(sig, order, float(cutoff))
    ts, mats = [], []
    for run in usable:
        sig = pose_to_signal(run, fs)
        ts.append(sig.timestamps)
        mats.append(np.array([p.matrix for p in signal_to_poses(run_filter(sig))]))
    if not ts:
        return FilteredSeries(np.zeros(0), np.zeros((0, 4, 4)), params)
    return FilteredSeries(np.concatenate(ts), np.concatenate(mats), params)


def cmd_process(args, cfg) -> int:
    archive = load_session(args.session)
    if archive.calibration is None:
        raise MissingGroupError(f"{args.session}: no calibration")
    archive.calibration.require_complete()
    rig = rig_from_dict(yaml.safe_load(archive.meta["rig_yaml"]))
    acq = section(cfg, "acquisition")
    frames = read_marker_csv(args.markers, rig)
    gap, max_rms = int(acq.get("max_gap", 10)), float(acq.get("max_fit_rms", 2.0))
    mta, cra = track_pair(frames, rig, gap, max_rms)
    samples = process_session(mta, cra, archive.calibration)
    fs = mta.sample_rate
    method = args.filter or section(cfg, "filtering").get("method", "butterworth")
    cutoff = args.cutoff if args.cutoff is not None else section(cfg, "filtering").get("cutoff", "auto")
    filtered = _filter_runs(samples, fs, method, cutoff, cfg)

    ref = section(cfg, "kinematics").get("reference_point")
    point = archive.calibration.incisal_point if ref is None else np.asarray(ref, float)
    archive.raw = {"mta": mta, "cra": cra}
    archive.processed = samples
    archive.filtered = filtered
    archive.trajectories = {"incisal": reference_trajectory(samples, point, "incisal")}
    if filtered is not None and len(filtered.timestamps):
        pts = filtered.poses[:, :3, :3] @ point + filtered.poses[:, :3, 3]
        archive.trajectories["incisal_filtered"] = Trajectory3("incisal_filtered", filtered.timestamps, pts)
    archive.reports = {}
    archive.meta.update({"sample_rate": fs, "motion_markers": str(args.markers)})
    save_session(archive, args.session)
    n_filt = 0 if filtered is None else len(filtered.timestamps)
    print(f"processed {len(samples)} poses ({int(mta.filled.sum())} MTA / {int(cra.filled.sum())} CRA "
          f"frames gap-filled); filter {method}: {n_filt} samples")
    return 0


# analyze ------------------------------------------------------------------


def cmd_analyze(args, cfg) -> int:
    archive = load_session(args.session)
    if not archive.processed:
        raise MissingGroupError(f"{args.session}: no processed poses; run 'process' first")
    fs = float(archive.meta["sample_rate"])
    a = section(cfg, "analysis")
    cutoff = args.cutoff if args.cutoff is not None else a.get("cutoff", "auto")
    longest = max(contiguous_runs(archive.processed, fs), key=len)
    report = residual_precision(longest, cutoff, int(a.get("butterworth_order", 4)), fs)
    archive.reports["precision"] = report
    out = {"precision": report.to_dict()}
    lines = [report.format()]
    if args.truth:
        truth = load_session(args.truth).truth.get("mandible")
        if truth is None:
            raise MissingGroupError(f"{args.truth}: no /truth/mandible series")
        err = evaluate_against_truth(archive.processed, truth)
        d = {
            "translation_mean_um": err.mean_translation * 1e3,
            "translation_max_um": err.max_translation * 1e3,
            "rotation_mean_deg": err.mean_rotation,
            "rotation_max_deg": err.max_rotation,
            "sample_count": err.sample_count,
        }
        archive.reports["truth_residual"] = d
        out["truth_residual"] = d
        lines.append(
            f"ground-truth residual: translation mean {d['translation_mean_um']:.3e} μm "
            f"(max {d['translation_max_um']:.3e} μm), rotation mean {d['rotation_mean_deg']:.3e}° "
            f"(max {d['rotation_max_deg']:.3e}°) over {err.sample_count} samples"
        )
    save_session(archive, args.session)
    print(json.dumps(out, indent=2, sort_keys=True) if args.json else "\n".join(lines))
    return 0


# plot ---------------------------------------------------------------------


def cmd_plot(args, cfg) -> int:
    archive = load_session(args.session)
    name = args.name or ("incisal_filtered" if args.filtered else "incisal")
    if args.what != "trajectory":
        raise ConfigError(f"unsupported plot target {args.what!r}")
    traj = archive.trajectories.get(name)
    if traj is None:
        raise MissingGroupError(f"{args.session}: no trajectory {name!r}; run 'process' first")
    export_plot_data(traj, args.out)
    print(f"wrote {args.out} ({len(traj)} samples)")
    return 0


# wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jawkin", description="Optical jaw-tracking pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="YAML config file (overrides $JAWKIN_CONFIG)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic session with ground truth")
    s.add_argument("--profile", choices=KINDS, default="open_close")
    s.add_argument("--noise", type=float, default=0.0, help="marker noise per axis, mm")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--occlusion", type=float, default=0.0, help="per-marker per-frame dropout probability")
    s.add_argument("--duration", type=float, default=10.0, help="motion duration, s")
    s.add_argument("--amplitude", type=float, help="translation amplitude, mm (default depends on profile)")
    s.add_argument("--amplitude-deg", type=float, default=2.0, help="rotational amplitude, deg")
    s.add_argument("--frequency", type=float, default=1.0, help="movement frequency, Hz")
    s.add_argument("--sample-rate", type=float, default=200.0, help="Hz")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("calibrate", help="digitize the six landmarks and build the calibration")
    s.add_argument("--markers", required=True, help="calibration marker CSV")
    s.add_argument("--rig", required=True, help="rig YAML with a virtual_model section")
    s.add_argument("--out", required=True, help="session HDF5 to create")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("process", help="compute model-frame mandible poses")
    s.add_argument("--session", required=True)
    s.add_argument("--markers", required=True, help="motion marker CSV")
    s.add_argument("--filter", choices=("savgol", "butterworth", "none"))
    s.add_argument("--cutoff", type=_cutoff_arg, help="Butterworth cutoff in Hz, or 'auto'")
    s.set_defaults(func=cmd_process)

    s = sub.add_parser("analyze", help="residual precision report")
    s.add_argument("--session", required=True)
    s.add_argument("--cutoff", type=_cutoff_arg, help="Hz, or 'auto' (10 dB SNR rule)")
    s.add_argument("--truth", help="ground_truth.h5 from 'synth' to also report the error against truth")
    s.add_argument("--json", action="store_true", help="print machine-readable JSON")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("plot", help="export trajectory plot data")
    s.add_argument("--session", required=True)
    s.add_argument("--what", default="trajectory", choices=("trajectory",))
    s.add_argument("--name", help="trajectory name (default incisal)")
    s.add_argument("--filtered", action="store_true", help="use the filtered incisal trajectory")
    s.add_argument("--out", required=True, help="output .svg or .csv")
    s.set_defaults(func=cmd_plot)
    return p


def _fail(code: str, message: str) -> int:
    print(f"error: {code}: {message}", file=sys.stderr)
    return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return int(args.func(args, cfg) or 0)
    except JawkinError as exc:
        return _fail(exc.code, str(exc))
    except FileNotFoundError as exc:
        return _fail("file-not-found", f"{exc.strerror or exc}: {exc.filename}")
    except (ValueError, OSError) as exc:
        return _fail("invalid-input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
