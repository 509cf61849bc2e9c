"""Pipeline parameters from YAML config files.

Defaults below are overlaid by the file named in ``JAWKIN_CONFIG`` (if set)
and then by an explicit path. Every section carries a ``units`` mapping so
that numeric values are never ambiguous.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .errors import ConfigError

ENV_VAR = "JAWKIN_CONFIG"

DEFAULTS: dict = {
    "acquisition": {
        "units": {"max_gap": "frames", "max_fit_rms": "mm"},
        "max_gap": 10,
        "max_fit_rms": 2.0,
    },
    "calibration": {
        "units": {"still_min": "frames", "still_tol": "mm/frame", "registration_warn": "mm"},
        "landmark_order": ["right_canine", "left_canine", "incisal_midpoint"],
        "still_min": 40,
        "still_tol": 0.2,
        "registration_warn": 2.0,
    },
    "kinematics": {
        "units": {"reference_point": "mm in CS_Mand_Anat"},
        "reference_point": None,  # None: digitized incisal midpoint
    },
    "filtering": {
        "units": {"savgol_window": "samples", "cutoff": "Hz"},
        "method": "butterworth",
        "savgol_window": 21,
        "savgol_order": 3,
        "butterworth_order": 4,
        "cutoff": "auto",
    },
    "snr": {
        "units": {"segment": "s", "drop": "dB", "noise_band": "fraction of Nyquist"},
        "segment": 2.0,
        "overlap": 0.5,
        "noise_band": 0.75,
        "drop": 10.0,
        "smooth_bins": 3,
    },
    "analysis": {
        "units": {"cutoff": "Hz"},
        "cutoff": "auto",
        "butterworth_order": 4,
    },
}


def _merge(base: dict, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def read_yaml(path: Union[str, Path]) -> dict:
    try:
        with Path(path).open() as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return dict(data)


def load_config(path: Optional[Union[str, Path]] = None, env: Optional[Mapping[str, str]] = None) -> dict:
    """Defaults, then ``$JAWKIN_CONFIG``, then ``path``; later layers win."""
    env = os.environ if env is None else env
    cfg = copy.deepcopy(DEFAULTS)
    for layer in (env.get(ENV_VAR), path):
        if layer:
            cfg = _merge(cfg, read_yaml(layer))
    return cfg


def section(cfg: Mapping, name: str) -> Mapping[str, Any]:
    return cfg.get(name) or {}
