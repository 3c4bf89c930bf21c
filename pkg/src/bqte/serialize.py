"""Curve output as CSV, versioned JSON, or a static SVG plot."""

from __future__ import annotations

import csv
import io
import json
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError, DataError
from .estimator import CurvePoint, EffectCurve

CURVE_SCHEMA = "bqte.effect-curve/v1"
FORMATS = ("csv", "json", "svg")


def curve_to_dict(curve: EffectCurve) -> dict:
    return {
        "schema": CURVE_SCHEMA,
        "curve_kind": curve.curve_kind,
        "scale": curve.scale,
        "alpha": curve.alpha,
        "valid_range": [float(v) for v in curve.valid_range],
        "points": [
            {"x": p.x, "estimate": p.estimate, "ci_low": p.ci_low, "ci_high": p.ci_high}
            for p in curve.points
        ],
        "provenance": curve.provenance,
    }


def curve_from_dict(doc: dict) -> EffectCurve:
    if doc.get("schema") != CURVE_SCHEMA:
        raise DataError(f"unsupported curve schema {doc.get('schema')!r}")
    return EffectCurve(
        curve_kind=doc["curve_kind"],
        scale=doc["scale"],
        points=[CurvePoint(p["x"], p["estimate"], p["ci_low"], p["ci_high"]) for p in doc["points"]],
        alpha=doc["alpha"],
        valid_range=tuple(doc["valid_range"]),
        provenance=doc.get("provenance", {}),
    )


def curve_from_json(data) -> EffectCurve:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return curve_from_dict(json.loads(data))


def dumps(doc) -> str:
    # sort_keys keeps output byte-stable for identical inputs
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def serialize_curve(curve: EffectCurve, fmt: str = "csv", reference=None) -> bytes:
    """Render ``curve`` as ``csv``, ``json`` or ``svg`` bytes.

    ``reference`` is an optional horizontal line for the SVG (for example
    the overall ATE on the matching scale).
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "estimate", "ci_low", "ci_high"])
        for p in curve.points:
            w.writerow([repr(p.x), repr(p.estimate), repr(p.ci_low), repr(p.ci_high)])
        return buf.getvalue().encode()
    if fmt == "json":
        return dumps(curve_to_dict(curve)).encode()
    if fmt == "svg":
        return render_svg(curve, reference).encode()
    raise ConfigError(f"unknown format {fmt!r}")


def _nice_ticks(lo, hi, target=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def _fmt(v):
    return f"{v:.2f}"


def render_svg(curve: EffectCurve, reference=None, width=640, height=420) -> str:
    """Points with vertical interval whiskers and an optional dashed
    reference line, one ``<circle class="estimate">`` and one
    ``<line class="whisker">`` per grid point."""
    left, right, top, bottom = 70, 20, 30, 55
    pw, ph = width - left - right, height - top - bottom
    pts = curve.points
    xs = np.array([p.x for p in pts], dtype=float)
    lows = np.array([p.ci_low for p in pts], dtype=float)
    highs = np.array([p.ci_high for p in pts], dtype=float)
    ys = [v for v in np.concatenate([lows, highs, [0.0]]) if np.isfinite(v)]
    if reference is not None:
        ys.append(float(reference))
    ymin, ymax = min(ys), max(ys)
    if xs.size:
        xmin, xmax = float(xs.min()), float(xs.max())
    else:
        xmin, xmax = curve.valid_range
    if xmax <= xmin:
        xmin, xmax = xmin - 1.0, xmax + 1.0
    if ymax <= ymin:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    xpad, ypad = 0.05 * (xmax - xmin), 0.08 * (ymax - ymin)
    xmin, xmax, ymin, ymax = xmin - xpad, xmax + xpad, ymin - ypad, ymax + ypad

    def sx(v):
        return left + (v - xmin) / (xmax - xmin) * pw

    def sy(v):
        return top + (ymax - v) / (ymax - ymin) * ph

    unit = "proportion of control outcome" if curve.scale == "relative" else "outcome units"
    ylabel = f"{curve.curve_kind.upper()} ({unit}, treatment minus control)"
    level = round(100 * (1 - curve.alpha), 6)
    title = f"{curve.curve_kind.upper()} with {level:g}% bootstrap intervals"
    dataset = curve.provenance.get("dataset") if isinstance(curve.provenance, dict) else None
    if dataset:
        title += f": {dataset}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text class="title" x="{width / 2}" y="18" text-anchor="middle" '
        f'font-size="13">{escape(title)}</text>',
        f'<line class="axis" x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in _nice_ticks(xmin, xmax):
        out.append(f'<line class="tick" x1="{_fmt(sx(t))}" y1="{top + ph}" x2="{_fmt(sx(t))}" '
                   f'y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(t))}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{t:g}</text>')
    for t in _nice_ticks(ymin, ymax):
        out.append(f'<line class="tick" x1="{left - 5}" y1="{_fmt(sy(t))}" x2="{left}" '
                   f'y2="{_fmt(sy(t))}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(sy(t) + 4)}" text-anchor="end" '
                   f'font-size="11">{t:g}</text>')
    out.append(f'<line class="zero" x1="{left}" y1="{_fmt(sy(0))}" x2="{left + pw}" '
               f'y2="{_fmt(sy(0))}" stroke="#999" stroke-width="0.8"/>')
    if reference is not None:
        out.append(f'<line class="reference" x1="{left}" y1="{_fmt(sy(reference))}" '
                   f'x2="{left + pw}" y2="{_fmt(sy(reference))}" stroke="black" '
                   f'stroke-dasharray="4 3"/>')
    for p in pts:
        x = _fmt(sx(p.x))
        out.append(f'<line class="whisker" x1="{x}" y1="{_fmt(sy(p.ci_low))}" x2="{x}" '
                   f'y2="{_fmt(sy(p.ci_high))}" stroke="black"/>')
        out.append(f'<circle class="estimate" cx="{x}" cy="{_fmt(sy(p.estimate))}" r="3.5" fill="red"/>')
    out.append(f'<text class="xlabel" x="{left + pw / 2}" y="{height - 12}" text-anchor="middle" '
               f'font-size="12">control-group outcome</text>')
    out.append(f'<text class="ylabel" transform="translate(16 {top + ph / 2}) rotate(-90)" '
               f'text-anchor="middle" font-size="12">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
