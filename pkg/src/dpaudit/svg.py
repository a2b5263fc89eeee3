"""Deterministic SVG charts: p-value sweeps and resampling trends.

Coordinates are printed with fixed precision and every labelled element
carries a stable id, so the same input always yields the same bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _num(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, x_range, y_range, title):
        self.x0, self.x1 = x_range
        if self.x1 <= self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x0 + 0.5
        self.y0, self.y1 = y_range
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            self.text(W / 2, 22, title, id="title", anchor="middle", size=14),
        ]

    def sx(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def sy(self, y):
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)

    @staticmethod
    def text(x, y, s, id=None, anchor="start", size=None, cls=None):
        attrs = f'x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"'
        if id:
            attrs = f'id="{id}" ' + attrs
        if cls:
            attrs += f' class="{cls}"'
        if size:
            attrs += f' font-size="{size}"'
        return f"<text {attrs}>{escape(s)}</text>"

    def axes(self, x_label, y_label, x_ticks, y_ticks):
        bottom, top = self.sy(self.y0), self.sy(self.y1)
        p = self.parts
        p.append(f'<line id="x-axis" x1="{_f(LEFT)}" y1="{_f(bottom)}" x2="{_f(W - RIGHT)}" y2="{_f(bottom)}" stroke="black"/>')
        p.append(f'<line id="y-axis" x1="{_f(LEFT)}" y1="{_f(bottom)}" x2="{_f(LEFT)}" y2="{_f(top)}" stroke="black"/>')
        for i, t in enumerate(x_ticks):
            x = self.sx(t)
            p.append(f'<line class="tick" x1="{_f(x)}" y1="{_f(bottom)}" x2="{_f(x)}" y2="{_f(bottom + 5)}" stroke="black"/>')
            p.append(self.text(x, bottom + 18, _num(t), id=f"x-tick-{i}", anchor="middle", cls="tick-label"))
        for i, t in enumerate(y_ticks):
            y = self.sy(t)
            p.append(f'<line class="tick" x1="{_f(LEFT - 5)}" y1="{_f(y)}" x2="{_f(LEFT)}" y2="{_f(y)}" stroke="black"/>')
            p.append(self.text(LEFT - 8, y + 4, _num(t), id=f"y-tick-{i}", anchor="end", cls="tick-label"))
        p.append(self.text((LEFT + W - RIGHT) / 2, H - 18, x_label, id="x-label", anchor="middle"))
        cy = (TOP + H - BOTTOM) / 2
        p.append(
            f'<text id="y-label" x="18" y="{_f(cy)}" text-anchor="middle" transform="rotate(-90 18 {_f(cy)})">{escape(y_label)}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def pvalue_chart(grid, p_values, alpha: float, measured: dict, title: str = "p-value over the epsilon grid", x_label: str = "epsilon") -> str:
    """Line chart of ``min(p_top, p_bottom)`` against the grid.

    Vertices and segments under ``alpha`` get the ``rejected`` class.
    """
    if len(grid) != len(p_values) or not grid:
        raise ValueError("grid and p-values must be non-empty and of equal length")
    c = _Canvas((grid[0], grid[-1]), (0.0, 1.0), title)
    c.axes(x_label, "min p-value over both orderings", _ticks(grid[0], grid[-1]), [0.0, 0.25, 0.5, 0.75, 1.0])
    p = c.parts
    ya = c.sy(alpha)
    p.append(f'<line id="alpha-line" class="alpha-line" x1="{_f(LEFT)}" y1="{_f(ya)}" x2="{_f(W - RIGHT)}" y2="{_f(ya)}" stroke="gray" stroke-dasharray="4 3"/>')
    p.append(c.text(W - RIGHT - 4, ya - 4, f"alpha = {_num(alpha)}", id="alpha-label", anchor="end"))
    pts = [(c.sx(e), c.sy(v)) for e, v in zip(grid, p_values)]
    p.append('<polyline id="pvalue-line" fill="none" stroke="#1f77b4" stroke-width="1.5" points="' + " ".join(f"{_f(x)},{_f(y)}" for x, y in pts) + '"/>')
    for i in range(len(pts) - 1):
        if p_values[i] < alpha and p_values[i + 1] < alpha:
            (xa, yb), (xb, yc) = pts[i], pts[i + 1]
            p.append(f'<line id="segment-{i}" class="segment rejected" x1="{_f(xa)}" y1="{_f(yb)}" x2="{_f(xb)}" y2="{_f(yc)}" stroke="#d62728" stroke-width="2.5"/>')
    for i, ((x, y), v) in enumerate(zip(pts, p_values)):
        cls = "vertex rejected" if v < alpha else "vertex"
        fill = "#d62728" if v < alpha else "#1f77b4"
        p.append(f'<circle id="vertex-{i}" class="{cls}" cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{fill}"/>')

    status, value = measured.get("status"), measured.get("value")
    if status == "below-grid":
        mx, label = grid[0], f"≤ {_num(grid[0])} (reads 0)"
    elif status == "above-grid":
        mx, label = grid[-1], f"> {_num(grid[-1])}"
    else:
        mx, label = value, f"measured = {_num(value)}"
    x = c.sx(mx)
    p.append(f'<line id="measured-marker" class="measured-marker {status}" x1="{_f(x)}" y1="{_f(c.sy(0))}" x2="{_f(x)}" y2="{_f(c.sy(1))}" stroke="#2ca02c" stroke-width="1.5"/>')
    anchor = "end" if x > W / 2 else "start"
    p.append(c.text(x + (-4 if anchor == "end" else 4), TOP + 14, label, id="measured-label", anchor=anchor))
    return c.render()


def trend_chart(series: dict, baselines: dict, title: str) -> str:
    """Measured epsilon against resampling ratio, one series per budget.

    ``series`` maps a label to ``[(ratio, value or None)]``; ``None`` marks a
    failed cell and is drawn as a gap. ``baselines`` maps the same labels to
    the no-resampling reading, drawn dashed.
    """
    ratios = sorted({r for pts in series.values() for r, _ in pts})
    values = [v for pts in series.values() for _, v in pts if v is not None]
    values += [v for v in baselines.values() if v is not None]
    top = max(values) if values else 1.0
    top = top * 1.1 if top > 0 else 1.0
    c = _Canvas((ratios[0] if ratios else 0.0, ratios[-1] if ratios else 1.0), (0.0, top), title)
    c.axes("resampling ratio (minority / majority)", "measured epsilon", ratios or [0.0], _ticks(0.0, top))
    p = c.parts
    for si, (label, pts) in enumerate(series.items()):
        colour = PALETTE[si % len(PALETTE)]
        base = baselines.get(label)
        if base is not None:
            yb = c.sy(base)
            p.append(f'<line id="baseline-{si}" class="baseline" x1="{_f(LEFT)}" y1="{_f(yb)}" x2="{_f(W - RIGHT)}" y2="{_f(yb)}" stroke="{colour}" stroke-dasharray="6 4"/>')
        run = []
        runs = []
        for r, v in pts:
            if v is None:
                if run:
                    runs.append(run)
                run = []
            else:
                run.append((c.sx(r), c.sy(v)))
        if run:
            runs.append(run)
        for ri, seg in enumerate(runs):
            p.append(f'<polyline id="series-{si}-{ri}" class="series" fill="none" stroke="{colour}" stroke-width="1.5" points="' + " ".join(f"{_f(x)},{_f(y)}" for x, y in seg) + '"/>')
        for vi, (r, v) in enumerate(pts):
            if v is None:
                x = c.sx(r)
                p.append(c.text(x, c.sy(0) - 6, "x", id=f"failed-{si}-{vi}", anchor="middle", cls="failed"))
            else:
                p.append(f'<circle id="vertex-{si}-{vi}" class="vertex" cx="{_f(c.sx(r))}" cy="{_f(c.sy(v))}" r="3" fill="{colour}"/>')
        ly = TOP + 14 + 16 * si
        p.append(f'<line x1="{_f(LEFT + 10)}" y1="{_f(ly - 4)}" x2="{_f(LEFT + 30)}" y2="{_f(ly - 4)}" stroke="{colour}"/>')
        p.append(c.text(LEFT + 34, ly, str(label), id=f"legend-{si}"))
    return c.render()
