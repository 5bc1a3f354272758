"""Command-line front end.

Subcommands::

    charred solve   --example E2 --grid 101x101 --x -2:2 --t 0:2 --plot contour --out e2
    charred verify  --example E2 --tol-oracle 1e-6 --tol-res 1e-3
    charred reduce  --example E8 [--format json]
    charred list-examples [E1 E4 | I | II]

Exit codes: 0 success, 1 configuration error, 2 no ok points, 3 I/O
failure, 4 a verification threshold was exceeded.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .gridio import write_csv
from .integrate import IntegratorConfig
from .plot import KINDS, render
from .problem import BUILTIN_IDS, GridSpec, ProblemCase, ProblemError, builtin_example, load_problem
from .reduce import ReductionError, describe, format_reduction
from .solve import OK, solve_on_grid
from .verify import VerificationError, fd_residual, implicit_residual, oracle_compare

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY, EXIT_IO, EXIT_THRESHOLD = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


class _IOFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means "no ok points" here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    example: Optional[str] = None
    spec_path: Optional[str] = None
    grid: dict = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    out: Optional[str] = None
    plot: Optional[str] = None
    slice_t: Optional[float] = None
    tol_oracle: float = 1e-6
    tol_res: float = 1e-3
    fmt: str = "text"
    filters: tuple = ()


# ---------------------------------------------------------------- parsing

def _grid_size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected NXxNT such as 101x101, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _interval(text: str) -> tuple[float, float]:
    parts = text.split(":")
    try:
        if len(parts) != 2:
            raise ValueError
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi such as -2:2, got {text!r}") from None


def _join_negative(argv: Sequence[str]) -> list[str]:
    """Glue ``--x -2:2`` into ``--x=-2:2`` so argparse does not take it for a flag."""
    out, it = [], iter(argv)
    for a in it:
        if a in ("--x", "--t", "--slice-t", "--rtol", "--atol", "--umax"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def _add_problem(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", help="built-in example id (E1..E8)")
    src.add_argument("--spec", help="path to a JSON problem document")
    p.add_argument("--grid", type=_grid_size, help="grid size NXxNT")
    p.add_argument("--x", type=_interval, help="x window lo:hi")
    p.add_argument("--t", type=_interval, help="t window lo:hi")
    p.add_argument("--rtol", type=float, help="relative tolerance")
    p.add_argument("--atol", type=float, help="absolute tolerance")
    p.add_argument("--umax", type=float, help="blow-up threshold on |u|")
    p.add_argument("--out", help="output path prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="charred", description="Second-order PDEs solved along characteristics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve on a grid, write CSV and optionally SVG")
    _add_problem(p)
    p.add_argument("--plot", choices=KINDS, help="also write an SVG plot")
    p.add_argument("--slice-t", type=float, dest="slice_t", help="time level for --plot slice")

    p = sub.add_parser("verify", help="residual and oracle checks, JSON report")
    _add_problem(p)
    p.add_argument("--tol-oracle", type=float, default=1e-6, dest="tol_oracle", help="max |u - oracle| (default 1e-6)")
    p.add_argument("--tol-res", type=float, default=1e-3, dest="tol_res", help="max PDE residual (default 1e-3)")

    p = sub.add_parser("reduce", help="print the reduced ODE and its class")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", help="built-in example id (E1..E8)")
    src.add_argument("--spec", help="path to a JSON problem document")
    p.add_argument("--format", choices=("text", "json"), default="text", dest="fmt", help="output format")

    p = sub.add_parser("list-examples", help="print the example registry")
    p.add_argument("filters", nargs="*", help="ids (E1) or class tokens (I, II, 1, 2)")
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(_join_negative(argv))
    cfg = RunConfig(command=ns.command)
    if ns.command == "list-examples":
        cfg.filters = tuple(ns.filters)
        return cfg
    cfg.example, cfg.spec_path = ns.example, ns.spec
    if ns.command == "reduce":
        cfg.fmt = ns.fmt
        return cfg
    if ns.grid:
        cfg.grid.update(nx=ns.grid[0], nt=ns.grid[1])
    if ns.x:
        cfg.grid.update(x_min=ns.x[0], x_max=ns.x[1])
    if ns.t:
        cfg.grid.update(t_min=ns.t[0], t_max=ns.t[1])
    overrides = {k: v for k, v in (("rel_tol", ns.rtol), ("abs_tol", ns.atol), ("u_max", ns.umax)) if v is not None}
    try:
        cfg.integrator = IntegratorConfig(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.out = ns.out
    if ns.command == "solve":
        cfg.plot, cfg.slice_t = ns.plot, ns.slice_t
        if cfg.plot == "slice" and cfg.slice_t is None:
            raise ConfigError("--plot slice needs --slice-t")
    else:
        cfg.tol_oracle, cfg.tol_res = ns.tol_oracle, ns.tol_res
    return cfg


# ---------------------------------------------------------------- helpers

def _load_case(cfg: RunConfig) -> ProblemCase:
    if cfg.example is not None:
        return builtin_example(cfg.example)
    try:
        text = Path(cfg.spec_path).read_text()
    except OSError as exc:
        raise _IOFailure(f"cannot read {cfg.spec_path}: {exc.strerror}") from None
    return load_problem(text)


def _grid_for(case: ProblemCase, cfg: RunConfig, base: GridSpec) -> GridSpec:
    return base.replace(**cfg.grid) if cfg.grid else base


def _write(path: Path, writer) -> None:
    try:
        writer(path)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror}") from None


def _coefficients(case: ProblemCase) -> str:
    s = case.spec
    parts = [f"a={ex.to_string(s.a)}", f"b={ex.to_string(s.b)}"]
    if case.cls == 1:
        parts += [f"alpha={ex.to_string(s.alpha)}", f"G={ex.to_string(s.G)}"]
    else:
        parts += [f"F={ex.to_string(s.F)}", f"m={s.m}"]
    return ", ".join(parts)


# ---------------------------------------------------------------- commands

def cmd_solve(cfg: RunConfig) -> int:
    case = _load_case(cfg)
    grid = solve_on_grid(case, _grid_for(case, cfg, case.default_grid), cfg.integrator)
    prefix = Path(cfg.out or case.id)
    csv_path = prefix.with_name(prefix.name + ".csv")
    _write(csv_path, lambda p: write_csv(grid, p))
    written = [str(csv_path)]
    if cfg.plot:
        svg = render(grid, cfg.plot, cfg.slice_t, title=f"{case.id} ({cfg.plot})")
        svg_path = prefix.with_name(prefix.name + ".svg")
        _write(svg_path, lambda p: p.write_text(svg))
        written.append(str(svg_path))
    n_ok = int(grid.ok.sum())
    print(f"{case.id}: {n_ok}/{grid.u.size} points ok; wrote {', '.join(written)}")
    if n_ok == 0:
        print("error: no ok points", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    case = _load_case(cfg)
    spec = _grid_for(case, cfg, case.verification_grid)
    grid = solve_on_grid(case, spec, cfg.integrator)
    if not grid.ok.any():
        print(f"{case.id}: no ok points", file=sys.stderr)
        return EXIT_EMPTY
    report = {
        "problem": case.id,
        "grid": {"x": [spec.x_min, spec.x_max, int(spec.nx)], "t": [spec.t_min, spec.t_max, int(spec.nt)]},
        "checks": {},
    }
    passed = True

    def run(name, fn, tol):
        nonlocal passed
        try:
            r = fn()
        except VerificationError as exc:
            report["checks"][name] = {"status": "error", "message": str(exc), "tolerance": tol}
            passed = False
            return
        ok = r.max_abs <= tol
        passed &= ok
        report["checks"][name] = {"status": "pass" if ok else "fail", "tolerance": tol, **r.to_dict()}

    run("residual", lambda: fd_residual(grid, case), cfg.tol_res)
    kind = case.oracle.kind
    if kind == "explicit":
        run("oracle", lambda: oracle_compare(grid, case.oracle), cfg.tol_oracle)
    elif kind == "implicit":
        run("oracle", lambda: implicit_residual(grid, case.oracle), cfg.tol_oracle)
    else:
        report["checks"]["oracle"] = {"status": "skipped", "reason": "no oracle for this problem"}
    report["passed"] = bool(passed)

    text = json.dumps(report, indent=2, allow_nan=True)
    if cfg.out:
        prefix = Path(cfg.out)
        path = prefix.with_name(prefix.name + ".json")
        _write(path, lambda p: p.write_text(text + "\n"))
    for name, c in report["checks"].items():
        extra = f" max={c['max_abs']:.3e} tol={c['tolerance']:g}" if "max_abs" in c else ""
        print(f"{case.id} {name}: {c['status']}{extra}", file=sys.stderr)
    if not cfg.out:
        print(text)
    return EXIT_OK if passed else EXIT_THRESHOLD


def cmd_reduce(cfg: RunConfig) -> int:
    case = _load_case(cfg)
    info = describe(case)
    print(json.dumps(info, indent=2) if cfg.fmt == "json" else format_reduction(info))
    return EXIT_OK


def _matches(case: ProblemCase, token: str) -> bool:
    t = token.strip().upper()
    return t == case.id.upper() or t in ({"I", "1"} if case.cls == 1 else {"II", "2"})


def cmd_list(cfg: RunConfig) -> int:
    cases = [builtin_example(i) for i in BUILTIN_IDS]
    valid = {i.upper() for i in BUILTIN_IDS} | {"I", "II", "1", "2"}
    bad = [f for f in cfg.filters if f.strip().upper() not in valid]
    if bad:
        raise ConfigError(f"unknown filter {', '.join(bad)}; use ids E1..E8 or classes I, II")
    if cfg.filters:
        cases = [c for c in cases if any(_matches(c, f) for f in cfg.filters)]
    print(f"{'id':<4} {'class':<6} {'oracle':<9} coefficients")
    for c in cases:
        print(f"{c.id:<4} {'I' if c.cls == 1 else 'II':<6} {c.oracle.kind:<9} {_coefficients(c)}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "reduce": cmd_reduce, "list-examples": cmd_list}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
        with np.errstate(all="ignore"):
            return COMMANDS[cfg.command](cfg)
    except SystemExit as exc:
        return int(exc.code or 0)
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ProblemError, ReductionError, ex.ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
