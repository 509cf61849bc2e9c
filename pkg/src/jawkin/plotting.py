"""Plot-data export of 3D trajectories: long-format CSV or a two-panel SVG."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np
from numpy.typing import NDArray

from .errors import EmptySeriesError
from .filtering import PoseSignal
from .kinematics import Trajectory3

PANEL_PX = 320.0
MARGIN_PX = 48.0


def _points(series: Union[Trajectory3, PoseSignal]) -> Tuple[NDArray, NDArray, str]:
    if isinstance(series, Trajectory3):
        return series.timestamps, series.points, series.label
    if isinstance(series, PoseSignal):
        return series.timestamps, series.channels[:, :3], "translation"
    raise TypeError(f"cannot export {type(series).__name__}")


def _tick_step(span: float) -> float:
    raw = span / 5.0 if span > 0 else 1.0
    mag = 10.0 ** np.floor(np.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        if raw <= m * mag:
            return m * mag
    return 10.0 * mag


def _panel(idx: int, name: str, h: NDArray, v: NDArray, h_label: str, v_label: str) -> str:
    """One projection panel; path coordinates are millimetres under a scale transform."""
    h0, h1 = float(h.min()), float(h.max())
    v0, v1 = float(v.min()), float(v.max())
    span = max(h1 - h0, v1 - v0, 1e-9)
    scale = PANEL_PX / span
    ox = MARGIN_PX + idx * (PANEL_PX + 2 * MARGIN_PX)
    oy = MARGIN_PX + PANEL_PX
    pts = " ".join(f"{a!r},{b!r}" for a, b in zip(h.tolist(), v.tolist()))
    # y is flipped so positive v points up
    tf = f"translate({ox - h0 * scale!r},{oy + v0 * scale!r}) scale({scale!r},{-scale!r})"
    out = [f'<g id="{name}" data-bbox-mm="{h0!r} {v0!r} {h1!r} {v1!r}">',
           f'<text x="{ox}" y="{MARGIN_PX - 20}" font-size="14">{escape(name)}</text>',
           f'<g transform="{tf}"><polyline id="{name}-path" points="{pts}" fill="none" '
           f'stroke="black" stroke-width="{1.0 / scale!r}"/></g>',
           f'<rect x="{ox}" y="{MARGIN_PX}" width="{PANEL_PX}" height="{PANEL_PX}" fill="none" stroke="gray"/>']
    step = _tick_step(span)
    for val in np.arange(np.ceil(h0 / step) * step, h0 + span + 1e-9, step):
        x = ox + (val - h0) * scale
        out.append(f'<text x="{x:.2f}" y="{oy + 16}" font-size="10" text-anchor="middle">{val:g}</text>')
    for val in np.arange(np.ceil(v0 / step) * step, v0 + span + 1e-9, step):
        y = oy - (val - v0) * scale
        out.append(f'<text x="{ox - 4}" y="{y:.2f}" font-size="10" text-anchor="end">{val:g}</text>')
    out.append(f'<text x="{ox + PANEL_PX / 2}" y="{oy + 34}" font-size="12" text-anchor="middle">'
               f'{h_label} [mm]</text>')
    out.append(f'<text x="{ox - 36}" y="{oy - PANEL_PX / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 {ox - 36} {oy - PANEL_PX / 2})">{v_label} [mm]</text>')
    out.append("</g>")
    return "\n".join(out)


def render_svg(t: NDArray, p: NDArray, title: str = "") -> str:
    width = 2 * (PANEL_PX + 2 * MARGIN_PX)
    height = PANEL_PX + 2 * MARGIN_PX + 20
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f"<title>{escape(title)} trajectory, {len(t)} samples, {t[-1] - t[0]:.3f} s</title>",
        _panel(0, "sagittal", p[:, 0], p[:, 2], "x", "z"),
        _panel(1, "frontal", p[:, 1], p[:, 2], "y", "z"),
        "</svg>",
    ]
    return "\n".join(body) + "\n"


def export_plot_data(series: Union[Trajectory3, PoseSignal], path: Union[str, Path],
                     fmt: Optional[str] = None) -> None:
    """Write ``series`` as CSV rows ``(t, x, y, z)`` or as an SVG of two projections.

    ``fmt`` defaults to the file suffix.
    """
    t, p, label = _points(series)
    if len(t) == 0:
        raise EmptySeriesError("nothing to export")
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "x_mm", "y_mm", "z_mm"])
            for ti, row in zip(t, p):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
    elif fmt == "svg":
        path.write_text(render_svg(np.asarray(t), np.asarray(p), label))
    else:
        raise ValueError(f"unknown plot format {fmt!r}; use csv or svg")
