"""Static SVG charts for profiles, breakdowns, radar plots and confusion matrices.

Output is plain text built from fixed-precision numbers, so rendering the
same artifact twice gives identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")
POSITIVE = "#3a6fb0"
NEGATIVE = "#c0392b"


def _f(v) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _doc(width, height, body: list[str], title: str = "") -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    parts = [head, f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{_f(width / 2)}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')
    parts += body
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


class _Scale:
    def __init__(self, lo, hi, a, b):
        if not math.isfinite(lo) or not math.isfinite(hi):
            raise ValueError("scale bounds must be finite")
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v):
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)


def render_profile(profile, width: int = 640, height: int = 400, rug=None) -> str:
    """One polyline per class over the profile grid, with optional rug marks."""
    grid = np.asarray(profile.grid, dtype=np.float64)
    values = np.asarray(profile.values, dtype=np.float64)
    if grid.size == 0 or values.size == 0:
        raise ValueError("empty profile")
    left, right, top, bottom = 60, width - 140, 30, height - 50
    xs = _Scale(grid.min(), grid.max(), left, right)
    ymin, ymax = min(0.0, float(values.min())), max(1.0, float(values.max()))
    ys = _Scale(ymin, ymax, bottom, top)
    body = _axes(left, right, top, bottom, xs, ys, profile.feature, "probability")
    for c, label in enumerate(profile.classes):
        pts = " ".join(f"{_f(xs(g))},{_f(ys(v))}" for g, v in zip(grid, values[:, c]))
        color = PALETTE[c % len(PALETTE)]
        body.append(f'<polyline class="curve" data-label="{escape(label)}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 * c
        body.append(f'<line x1="{right + 10}" y1="{ly}" x2="{right + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{right + 28}" y="{ly + 4}">{escape(label)}</text>')
    rug = profile.rug if rug is None else rug
    if rug is not None:
        for v in np.unique(np.asarray(rug, dtype=np.float64)):
            if grid.min() <= v <= grid.max():
                body.append(f'<line class="rug" x1="{_f(xs(v))}" y1="{bottom}" x2="{_f(xs(v))}" '
                            f'y2="{bottom - 6}" stroke="#555" stroke-width="0.5"/>')
    kind = getattr(profile, "kind", "profile")
    return _doc(width, height, body, f"{kind}: {profile.feature}")


def _axes(left, right, top, bottom, xs, ys, xlabel, ylabel) -> list[str]:
    out = [f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>']
    for t in np.linspace(xs.lo, xs.hi, 5):
        out.append(f'<text x="{_f(xs(t))}" y="{bottom + 14}" text-anchor="middle">{t:.4g}</text>')
    for t in np.linspace(ys.lo, ys.hi, 5):
        out.append(f'<text x="{left - 4}" y="{_f(ys(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{_f((left + right) / 2)}" y="{bottom + 32}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{_f((top + bottom) / 2)}" transform="rotate(-90 14 {_f((top + bottom) / 2)})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    return out


def render_breakdown(bd, width: int = 640, bar_height: int = 18, max_bars: int | None = None) -> str:
    """Signed horizontal bars, one per step; negative contributions use a second colour."""
    steps = list(zip(bd.features, bd.contributions))
    if max_bars is not None:
        steps = steps[:max_bars]
    if not steps:
        raise ValueError("empty breakdown")
    label_w = 200
    top = 30
    height = top + bar_height * (len(steps) + 2) + 30
    span = max(abs(c) for _, c in steps) or 1.0
    half = (width - label_w - 40) / 2
    zero = label_w + 20 + half
    px = half / span
    body = [f'<line x1="{_f(zero)}" y1="{top}" x2="{_f(zero)}" y2="{height - 30}" stroke="#888"/>',
            f'<text x="10" y="{top + 12}">intercept {bd.intercept:.4f}</text>']
    for i, (name, c) in enumerate(steps):
        y = top + bar_height * (i + 1)
        w = abs(c) * px
        x = zero if c >= 0 else zero - w
        color = POSITIVE if c >= 0 else NEGATIVE
        body.append(f'<text x="10" y="{y + bar_height * 0.7:.1f}">{escape(str(name))}</text>')
        body.append(f'<rect class="bar" data-value="{c!r}" x="{x:.3f}" y="{y + 2}" width="{w:.3f}" '
                    f'height="{bar_height - 4}" fill="{color}"/>')
        body.append(f'<text x="{_f(width - 10)}" y="{y + bar_height * 0.7:.1f}" text-anchor="end">{c:+.4f}</text>')
    y = top + bar_height * (len(steps) + 1)
    body.append(f'<text x="10" y="{y + bar_height * 0.7:.1f}">prediction {bd.prediction:.4f}</text>')
    return _doc(width, height, body, f"breakdown: {bd.target}")


def render_radar(scaled: dict[str, dict[str, float]], size: int = 520) -> str:
    """Closed polygon per fault over the shared feature axes (values in [0, 1])."""
    if not scaled:
        raise ValueError("no radar data")
    faults = list(scaled)
    axes = list(scaled[faults[0]])
    if len(axes) < 3:
        raise ValueError("radar needs at least three features")
    cx = cy = size / 2
    r = size / 2 - 90
    n = len(axes)

    def point(i, v):
        ang = -math.pi / 2 + 2 * math.pi * i / n
        return cx + r * v * math.cos(ang), cy + r * v * math.sin(ang)

    body = []
    for ring in (0.25, 0.5, 0.75, 1.0):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (point(i, ring) for i in range(n)))
        body.append(f'<polygon fill="none" stroke="#ddd" points="{pts}"/>')
    for i, name in enumerate(axes):
        x, y = point(i, 1.08)
        body.append(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="middle" font-size="8">{escape(name)}</text>')
    for k, fault in enumerate(faults):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (point(i, scaled[fault][a]) for i, a in enumerate(axes)))
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<polygon class="medoid" data-label="{escape(fault)}" fill="{color}" fill-opacity="0.08" '
                    f'stroke="{color}" points="{pts}"/>')
        body.append(f'<text x="8" y="{30 + 14 * k}" fill="{color}">{escape(fault)}</text>')
    return _doc(size, size, body, "medoids")


def render_confusion(cm, cell: int = 56) -> str:
    """Annotated grid with rows as true and columns as predicted classes."""
    counts = np.asarray(cm.counts)
    labels = list(cm.labels)
    if counts.size == 0:
        raise ValueError("empty confusion matrix")
    pad = 110
    size = pad + cell * len(labels) + 20
    peak = counts.max() or 1
    body = []
    for j, lab in enumerate(labels):
        x = pad + cell * j + cell / 2
        body.append(f'<text x="{_f(x)}" y="{pad - 8}" text-anchor="middle" font-size="9">{escape(lab)}</text>')
        body.append(f'<text x="{pad - 6}" y="{_f(pad + cell * j + cell / 2 + 4)}" text-anchor="end" '
                    f'font-size="9">{escape(lab)}</text>')
    for i in range(len(labels)):
        for j in range(len(labels)):
            v = int(counts[i, j])
            shade = 255 - int(round(200 * v / peak))
            fill = f"rgb({shade},{shade},255)" if i == j else f"rgb(255,{shade},{shade})"
            x, y = pad + cell * j, pad + cell * i
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>')
            body.append(f'<text x="{_f(x + cell / 2)}" y="{_f(y + cell / 2 + 4)}" text-anchor="middle">{v}</text>')
    body.append(f'<text x="8" y="{size - 6}">accuracy {cm.accuracy:.4f}</text>')
    return _doc(size, size, body, "confusion (rows: true, columns: predicted)")
