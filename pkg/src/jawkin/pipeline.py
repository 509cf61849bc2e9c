"""In-memory chain from marker recordings to model-frame mandible poses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

from numpy.typing import ArrayLike

from .acquisition import MAX_FIT_RMS_MM, MAX_GAP_FRAMES, MarkerFrame, PoseSeries, RigGeometry, track_body
from .calibration import CalibrationState, calibrate_session
from .kinematics import JawPoseSample, process_session


@dataclass
class PipelineResult:
    calibration: CalibrationState
    mta: PoseSeries
    cra: PoseSeries
    samples: List[JawPoseSample]


def track_pair(frames: Sequence[MarkerFrame], rig: RigGeometry, max_gap_frames: int = MAX_GAP_FRAMES,
               max_rms: float = MAX_FIT_RMS_MM):
    mta = track_body(frames, rig["MTA"], rig, max_gap_frames, max_rms)
    cra = track_body(frames, rig["CRA"], rig, max_gap_frames, max_rms, sample_rate=mta.sample_rate)
    return mta, cra


def run_pipeline(calibration_frames: Sequence[MarkerFrame], motion_frames: Sequence[MarkerFrame],
                 rig: RigGeometry, model_landmarks: ArrayLike, **calibration_kwargs) -> PipelineResult:
    """Calibrate on one recording, then track and process another."""
    calib = calibrate_session(calibration_frames, rig, model_landmarks, **calibration_kwargs)
    calib.require_complete()
    mta, cra = track_pair(motion_frames, rig)
    return PipelineResult(calib, mta, cra, process_session(mta, cra, calib))


def run_synthetic(session) -> PipelineResult:
    """:func:`run_pipeline` on a :class:`~jawkin.synth.SynthSession`."""
    return run_pipeline(session.calibration_frames, session.motion_frames, session.rig,
                        session.model_landmarks)
