"""Deterministic SVG rendering of solution grids.

Three kinds: ``surface`` (heatmap standing in for a 3D plot), ``contour``
(marching squares) and ``slice`` (u against x at one t).  Cells that are
not ok are left blank.  Output depends only on the grid values, so two
renders of the same grid are byte-identical.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .solve import OK, SolutionGrid

WIDTH, HEIGHT = 640, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 90, 40, 50
KINDS = ("surface", "contour", "slice")

# viridis anchors; expanded to 256 entries by linear interpolation
_ANCHORS = np.array([
    (68, 1, 84), (72, 40, 120), (62, 74, 137), (49, 104, 142), (38, 130, 142),
    (31, 158, 137), (53, 183, 121), (109, 205, 89), (180, 222, 44), (253, 231, 37),
], dtype=float)
_POS = np.linspace(0.0, 1.0, len(_ANCHORS))
PALETTE = tuple(
    "#%02x%02x%02x" % tuple(int(round(np.interp(s, _POS, _ANCHORS[:, c]))) for c in range(3))
    for s in np.linspace(0.0, 1.0, 256)
)


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        self.x_lo, self.x_hi = x_lo, x_hi
        self.y_lo, self.y_hi = (y_lo, y_hi) if y_hi > y_lo else (y_lo - 0.5, y_hi + 0.5)
        self.w = WIDTH - LEFT - RIGHT
        self.h = HEIGHT - TOP - BOTTOM

    def px(self, x):
        return LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * self.w

    def py(self, y):
        return TOP + self.h - (y - self.y_lo) / (self.y_hi - self.y_lo) * self.h


def _color(v: float, lo: float, hi: float) -> str:
    if hi <= lo:
        return PALETTE[128]
    i = int((v - lo) / (hi - lo) * 255.0 + 0.5)
    return PALETTE[min(255, max(0, i))]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _axes(fr: _Frame, xlabel: str, ylabel: str, title: str) -> list[str]:
    out = [
        f'<rect x="{LEFT}" y="{TOP}" width="{fr.w}" height="{fr.h}" fill="none" stroke="#000"/>',
        f'<text x="{WIDTH / 2 - RIGHT / 2:.0f}" y="{TOP - 14}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{LEFT + fr.w / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{TOP + fr.h / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {TOP + fr.h / 2:.0f})">{ylabel}</text>',
    ]
    for v in _ticks(fr.x_lo, fr.x_hi):
        x = fr.px(v)
        out.append(f'<line x1="{_f(x)}" y1="{TOP + fr.h}" x2="{_f(x)}" y2="{TOP + fr.h + 4}" stroke="#000"/>')
        out.append(f'<text x="{_f(x)}" y="{TOP + fr.h + 16}" text-anchor="middle" font-size="10">{v:.3g}</text>')
    for v in _ticks(fr.y_lo, fr.y_hi):
        y = fr.py(v)
        out.append(f'<line x1="{LEFT - 4}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="#000"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(y + 3)}" text-anchor="end" font-size="10">{v:.3g}</text>')
    return out


def _colorbar(lo: float, hi: float) -> list[str]:
    x0, h = WIDTH - RIGHT + 20, HEIGHT - TOP - BOTTOM
    out = []
    for k in range(64):
        y = TOP + h - (k + 1) * h / 64
        out.append(f'<rect x="{x0}" y="{_f(y)}" width="14" height="{_f(h / 64 + 0.5)}" '
                   f'fill="{PALETTE[int(k * 255 / 63)]}"/>')
    for v in _ticks(lo, hi):
        y = TOP + h - (v - lo) / (hi - lo) * h if hi > lo else TOP + h / 2
        out.append(f'<text x="{x0 + 18}" y="{_f(y + 3)}" font-size="10">{v:.3g}</text>')
    return out


def _range(grid: SolutionGrid):
    ok = (grid.status == OK) & np.isfinite(grid.u)
    if not ok.any():
        return None
    vals = grid.u[ok]
    return float(vals.min()), float(vals.max())


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>'] + body + ["</svg>", ""])


def _edges(v: np.ndarray) -> np.ndarray:
    """Cell boundaries around the points of a sorted axis."""
    if len(v) == 1:
        return np.array([v[0] - 0.5, v[0] + 0.5])
    mid = 0.5 * (v[1:] + v[:-1])
    return np.concatenate([[v[0] - (mid[0] - v[0])], mid, [v[-1] + (v[-1] - mid[-1])]])


def render_surface(grid: SolutionGrid, title: str = "") -> str:
    ex_, et = _edges(grid.x), _edges(grid.t)
    fr = _Frame(ex_[0], ex_[-1], et[0], et[-1])
    rng = _range(grid)
    body = []
    if rng is not None:
        lo, hi = rng
        for j in range(len(grid.t)):
            y1, y0 = fr.py(et[j + 1]), fr.py(et[j])
            for i in range(len(grid.x)):
                if grid.status[j, i] != OK:
                    continue
                x0, x1 = fr.px(ex_[i]), fr.px(ex_[i + 1])
                body.append(f'<rect x="{_f(x0)}" y="{_f(y1)}" width="{_f(x1 - x0 + 0.3)}" '
                            f'height="{_f(y0 - y1 + 0.3)}" fill="{_color(grid.u[j, i], lo, hi)}"/>')
        body += _colorbar(lo, hi)
    return _document(body + _axes(fr, "x", "t", title))


def contour_levels(lo: float, hi: float, n: int = 10) -> np.ndarray:
    """``n`` equally spaced interior levels of ``[lo, hi]``."""
    return lo + (hi - lo) * (np.arange(1, n + 1) / (n + 1))


def marching_squares(x: np.ndarray, t: np.ndarray, u: np.ndarray, ok: np.ndarray,
                     level: float) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Line segments of ``u = level``; cells with a non-ok corner are skipped.

    Saddle cells are resolved by the mean of the four corners.
    """
    segs = []
    nt, nx = u.shape
    for j in range(nt - 1):
        for i in range(nx - 1):
            if not (ok[j, i] and ok[j, i + 1] and ok[j + 1, i] and ok[j + 1, i + 1]):
                continue
            # corners counter-clockwise from (i, j)
            c = ((x[i], t[j], u[j, i]), (x[i + 1], t[j], u[j, i + 1]),
                 (x[i + 1], t[j + 1], u[j + 1, i + 1]), (x[i], t[j + 1], u[j + 1, i]))
            idx = sum(1 << k for k in range(4) if c[k][2] > level)
            if idx in (0, 15):
                continue

            def cut(a, b):
                (xa, ta, ua), (xb, tb, ub) = c[a], c[b]
                s = (level - ua) / (ub - ua)
                return (xa + s * (xb - xa), ta + s * (tb - ta))

            ends = ((0, 1), (1, 2), (2, 3), (3, 0))
            table = {
                1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
                8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(0, 3)],
            }
            if idx in (5, 10):
                # a high centre joins the high corners and isolates the low ones
                centre_high = (c[0][2] + c[1][2] + c[2][2] + c[3][2]) / 4.0 > level
                around_c1_c3, around_c0_c2 = [(0, 1), (2, 3)], [(3, 0), (1, 2)]
                if idx == 5:
                    pairs = around_c1_c3 if centre_high else around_c0_c2
                else:
                    pairs = around_c0_c2 if centre_high else around_c1_c3
            else:
                pairs = table[idx]
            for a, b in pairs:
                segs.append((cut(*ends[a]), cut(*ends[b])))
    return segs


def render_contour(grid: SolutionGrid, levels: Optional[Sequence[float]] = None, title: str = "") -> str:
    fr = _Frame(grid.x[0], grid.x[-1], grid.t[0], grid.t[-1])
    rng = _range(grid)
    body = []
    if rng is not None:
        lo, hi = rng
        levels = contour_levels(lo, hi) if levels is None else np.asarray(levels, float)
        ok = (grid.status == OK) & np.isfinite(grid.u)
        for lev in levels:
            segs = marching_squares(grid.x, grid.t, grid.u, ok, float(lev))
            if not segs:
                continue
            d = " ".join(f"M{_f(fr.px(a[0]))} {_f(fr.py(a[1]))}L{_f(fr.px(b[0]))} {_f(fr.py(b[1]))}"
                         for a, b in segs)
            body.append(f'<path d="{d}" fill="none" stroke="{_color(lev, lo, hi)}" stroke-width="1.2">'
                        f'<title>u = {lev:.6g}</title></path>')
        body += _colorbar(lo, hi)
    return _document(body + _axes(fr, "x", "t", title))


def render_slice(grid: SolutionGrid, t: float, title: str = "") -> str:
    j = int(np.argmin(np.abs(grid.t - t)))
    ok = (grid.status[j] == OK) & np.isfinite(grid.u[j])
    vals = grid.u[j][ok]
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    fr = _Frame(grid.x[0], grid.x[-1], lo - pad, hi + pad)
    body, run = [], []
    for i in range(len(grid.x) + 1):
        if i < len(grid.x) and ok[i]:
            run.append(f"{_f(fr.px(grid.x[i]))},{_f(fr.py(grid.u[j, i]))}")
            continue
        if run:
            body.append(f'<polyline points="{" ".join(run)}" fill="none" stroke="{PALETTE[64]}" stroke-width="1.5"/>')
            run = []
    label = title or f"t = {grid.t[j]:.6g}"
    return _document(body + _axes(fr, "x", "u", label))


def render(grid: SolutionGrid, kind: str = "surface", slice_t: Optional[float] = None, title: str = "") -> str:
    if kind == "surface":
        return render_surface(grid, title)
    if kind == "contour":
        return render_contour(grid, title=title)
    if kind == "slice":
        if slice_t is None or not math.isfinite(slice_t):
            raise ValueError("slice plots need a finite slice time")
        return render_slice(grid, slice_t, title)
    raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(KINDS)}")
