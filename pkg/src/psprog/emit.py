"""Serialization helpers: JSON, CSV with paired rational columns, and a
small self-contained SVG line plot."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from fractions import Fraction
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .exactmath import CertifiedReal, format_rational


def decimal15(x) -> str:
    """15 significant digits, no exponent for ordinary magnitudes."""
    if x is None:
        return ""
    v = float(x)
    if v == 0:
        return "0"
    return f"{v:.15g}"


def jsonable(obj):
    """Recursively convert reports into JSON-ready values (rationals as "p/q")."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return str(obj)
        return obj
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, CertifiedReal):
        return {"lower": decimal15(obj.lower), "upper": decimal15(obj.upper)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return jsonable(obj.to_dict())
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return str(obj)


def dumps_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV where every Fraction cell expands into "p/q" plus a *_dec column.

    Columns holding a Fraction in any row are expanded for all rows.
    """
    rows = [list(r) for r in rows]
    rational_cols = {i for r in rows for i, v in enumerate(r) if isinstance(v, Fraction)}
    out_header = []
    for i, h in enumerate(header):
        out_header.append(h)
        if i in rational_cols:
            out_header.append(f"{h}_dec")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out_header)
    for r in rows:
        cells = []
        for i, v in enumerate(r):
            if i in rational_cols:
                if v is None:
                    cells += ["", ""]
                else:
                    q = Fraction(v)
                    cells += [format_rational(q), decimal15(q)]
            else:
                cells.append(_cell(v))
        w.writerow(cells)
    return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return decimal15(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


# ---------------------------------------------------------------------------
# SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def svg_lines(series: dict, title: str, xlabel: str, ylabel: str,
              hlines: Sequence[tuple] = (), width: int = 720, height: int = 420,
              markers: bool = False) -> str:
    """One polyline per entry of ``series`` (label -> (xs, ys)).

    ``hlines`` holds (y, label) reference lines. Output depends only on the
    inputs, so identical data gives byte-identical files.
    """
    ml, mr, mt, mb = 64, 150, 36, 48
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys] + [float(y) for y, _ in hlines]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all + [0.0]), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pad = 0.05 * (y1 - y0)
    y1 += pad

    def sx(x):
        return ml + (float(x) - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (float(y) - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        X = sx(t)
        parts.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        parts.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for y, label in hlines:
        Y = sy(y)
        parts.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="gray" stroke-dasharray="4 3"/>')
        parts.append(f'<text x="{ml + pw + 6}" y="{Y + 4:.2f}" fill="gray">{escape(label)}</text>')
    for idx, (label, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        if markers:
            for x, y in zip(xs, ys):
                parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = mt + 14 + 18 * idx
        parts.append(f'<line x1="{ml + pw + 6}" y1="{ly - 4}" x2="{ml + pw + 26}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 30}" y="{ly}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
