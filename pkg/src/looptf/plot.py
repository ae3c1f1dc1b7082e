"""Self-contained SVG line charts for stopping curves and per-length accuracy."""

from __future__ import annotations

from xml.sax.saxutils import escape

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 64, 64, 40, 48


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) * (b - a) / span


def _polyline(xs, ys, color, cls) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'


def _frame(title: str, xlabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" fill="none" stroke="#444"/>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
    ]


def _ticks(xs, sx, y0) -> list[str]:
    step = max(1, len(xs) // 12)
    out = []
    for x in xs[::step]:
        out.append(f'<text x="{_fmt(sx(x))}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{x}</text>')
    return out


def _yaxis(label, lo, hi, x, anchor, color) -> list[str]:
    out = []
    sy = _scale(lo, hi, H - BOTTOM, TOP)
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{x}" y="{_fmt(sy(v) + 4)}" text-anchor="{anchor}" font-family="sans-serif" '
                   f'font-size="11" fill="{color}">{v:.3g}</text>')
    out.append(f'<text x="{x}" y="{TOP - 8}" text-anchor="{anchor}" font-family="sans-serif" font-size="12" '
               f'fill="{color}">{escape(label)}</text>')
    return out


def stopping_curve_svg(steps, self_ce, exact_match, chosen_step: int, title: str) -> str:
    """Self cross-entropy (left axis) and exact match (right axis) per loop step,
    with one vertical marker at the chosen step."""
    steps = [int(s) for s in steps]
    sx = _scale(min(steps), max(steps), LEFT, W - RIGHT)
    ce_hi = max(max(self_ce), 1e-6)
    s_ce = _scale(0.0, ce_hi, H - BOTTOM, TOP)
    s_acc = _scale(0.0, 1.0, H - BOTTOM, TOP)
    parts = _frame(title, "loop step")
    parts += _ticks(steps, sx, H - BOTTOM)
    parts += _yaxis("self cross-entropy", 0.0, ce_hi, LEFT - 6, "end", "#c0392b")
    parts += _yaxis("exact match", 0.0, 1.0, W - RIGHT + 6, "start", "#2471a3")
    parts.append(_polyline([sx(s) for s in steps], [s_ce(v) for v in self_ce], "#c0392b", "self-ce"))
    parts.append(_polyline([sx(s) for s in steps], [s_acc(v) for v in exact_match], "#2471a3", "exact-match"))
    x = _fmt(sx(chosen_step))
    parts.append(f'<line class="marker" x1="{x}" y1="{TOP}" x2="{x}" y2="{H - BOTTOM}" stroke="black" '
                 f'stroke-dasharray="5,4" data-step="{chosen_step}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def accuracy_svg(lengths, accuracy, ceiling: int, title: str) -> str:
    """Exact match per test length with a dashed marker at the training ceiling."""
    lengths = [int(n) for n in lengths]
    lo, hi = min(lengths + [ceiling]), max(lengths + [ceiling])
    sx = _scale(lo, hi, LEFT, W - RIGHT)
    sy = _scale(0.0, 1.0, H - BOTTOM, TOP)
    parts = _frame(title, "test length")
    parts += _ticks(list(range(lo, hi + 1)), sx, H - BOTTOM)
    parts += _yaxis("exact match", 0.0, 1.0, LEFT - 6, "end", "#2471a3")
    parts.append(_polyline([sx(n) for n in lengths], [sy(a) for a in accuracy], "#2471a3", "exact-match"))
    x = _fmt(sx(ceiling))
    parts.append(f'<line class="marker" x1="{x}" y1="{TOP}" x2="{x}" y2="{H - BOTTOM}" stroke="black" '
                 f'stroke-dasharray="5,4" data-length="{ceiling}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
