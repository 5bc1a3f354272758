"""CSV serialization of solution grids.

One row per grid point, row-major over t then x::

    x,t,u,status,blowup_t

Floats are written with 17 significant digits, which is enough for an
exact round trip of IEEE doubles.  ``blowup_t`` repeats the column's
blow-up time (``nan`` when there is none).
"""

from __future__ import annotations

import csv
import io
import os
from typing import TextIO, Union

import numpy as np

from .solve import STATUSES, SolutionGrid

HEADER = ("x", "t", "u", "status", "blowup_t")


class GridFormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(grid: SolutionGrid, dest: Union[str, os.PathLike, TextIO]) -> None:
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_csv(grid, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(HEADER)
    xs = [_fmt(v) for v in grid.x]
    bts = [_fmt(v) for v in grid.blowup_time]
    for j, t in enumerate(grid.t):
        ts = _fmt(t)
        for i, x in enumerate(xs):
            w.writerow((x, ts, _fmt(grid.u[j, i]), grid.status[j, i], bts[i]))


def to_csv_string(grid: SolutionGrid) -> str:
    buf = io.StringIO()
    write_csv(grid, buf)
    return buf.getvalue()


def read_csv(src: Union[str, os.PathLike, TextIO]) -> SolutionGrid:
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return read_csv(fh)
    rows = list(csv.reader(src))
    if not rows or tuple(rows[0]) != HEADER:
        raise GridFormatError(f"expected header {','.join(HEADER)}")
    body = rows[1:]
    if not body:
        raise GridFormatError("no data rows")
    try:
        x_all = np.array([float(r[0]) for r in body])
        t_all = np.array([float(r[1]) for r in body])
        u_all = np.array([float(r[2]) for r in body])
        b_all = np.array([float(r[4]) for r in body])
    except (ValueError, IndexError) as exc:
        raise GridFormatError(f"malformed row: {exc}") from exc
    status = np.array([r[3] for r in body])
    bad = set(status.tolist()) - set(STATUSES)
    if bad:
        raise GridFormatError(f"unknown status tokens {sorted(bad)}")

    nx = int(np.argmax(t_all != t_all[0])) if np.any(t_all != t_all[0]) else len(body)
    if len(body) % nx:
        raise GridFormatError("row count is not a multiple of the x-axis length")
    nt = len(body) // nx
    x = x_all[:nx]
    t = t_all[::nx]
    shape = (nt, nx)
    if not (np.array_equal(x_all.reshape(shape), np.broadcast_to(x, shape))
            and np.array_equal(t_all.reshape(shape), np.broadcast_to(t[:, None], shape))):
        raise GridFormatError("rows are not a row-major (t, x) lattice")
    return SolutionGrid(x, t, u_all.reshape(shape), status.reshape(shape), b_all[:nx].copy())
