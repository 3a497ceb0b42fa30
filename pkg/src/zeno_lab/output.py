"""Artifact writers: CSV with round-trip precision, a canonical JSON
summary and a dependency-free SVG line plot."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, columns: Mapping[str, np.ndarray]) -> None:
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    lines = [",".join(names)]
    for row in zip(*data):
        lines.append(",".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # JSON has no NaN or infinity literals
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path: Path, payload: Mapping[str, Any]) -> None:
    text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")


def render_svg(columns: Mapping[str, np.ndarray], log_y: bool = False, width: int = 640, height: int = 400) -> str:
    names = list(columns)
    x = np.asarray(columns[names[0]], dtype=float)
    curves = [(n, np.asarray(columns[n], dtype=float)) for n in names[1:]]
    floor = 1e-16
    if log_y:
        curves = [(n, np.log10(np.maximum(y, floor))) for n, y in curves]
    ys = np.concatenate([y for _, y in curves]) if curves else np.zeros(1)
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    left, right, top, bottom = 60, 150, 20, 40
    pw, ph = width - left - right, height - top - bottom

    def px(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{names[0]}</text>',
        f'<text x="14" y="{top + ph / 2:.1f}" font-size="12" transform="rotate(-90 14 {top + ph / 2:.1f})"'
        f' text-anchor="middle">{"log10 " if log_y else ""}value</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        yv = y_lo + frac * (y_hi - y_lo)
        xv = x_lo + frac * (x_hi - x_lo)
        out.append(f'<text x="{left - 4}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 14}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
    for k, (name, y) in enumerate(curves):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" stroke="{color}"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly}" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path: Path, columns: Mapping[str, np.ndarray], log_y: bool = False) -> None:
    path.write_text(render_svg(columns, log_y), encoding="utf-8", newline="\n")
