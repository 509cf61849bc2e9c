"""Optical jaw-motion tracking: marker ingestion, landmark calibration,
relative mandibular kinematics, zero-phase filtering and precision analysis."""

__version__ = "0.1.0"
