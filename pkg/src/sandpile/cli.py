"""Command line front end: ``sandpile {simulate,radial,verify,calibrate}``.

Exit status: 0 success, 1 a check failed, 2 usage error, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import analytic, engine, render, verify
from .engine import Schedule
from .errors import InvalidConfig, NonConvergence, NotApplicable

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NONCONVERGENCE = 0, 1, 2, 3

SCHEDULES = {"sweep": "sweep", "random": "random_infinitive", "priority": "priority_excess"}
EMIT_KINDS = ("image", "csv", "json", "report")

log = logging.getLogger("sandpile")


@dataclass
class RunConfig:
    command: str
    d: int = 2
    sources: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    m: float = 10.0
    schedule: Schedule = field(default_factory=Schedule)
    eps_stop: float | None = None
    out_prefix: str = "sandpile"
    emit: frozenset[str] = frozenset({"image", "csv", "json"})
    threads: int | None = None
    max_topplings: int = engine.DEFAULT_MAX_TOPPLINGS
    lift_every: int | None = engine.DEFAULT_LIFT_EVERY
    # radial
    amplitude: float | None = None
    tol: float = 1e-10
    # verify
    checkpoint: str | None = None
    # calibrate
    m_list: list[float] = field(default_factory=list)
    n_max: float = 2.0**22
    time_budget: float = 600.0


def parse_source(text: str) -> tuple[tuple[int, ...], float]:
    """``x,y[,z...]:mass`` → ((x, y, ...), mass)."""
    try:
        where, mass = text.rsplit(":", 1)
        coords = tuple(int(c) for c in where.split(","))
        return coords, float(mass)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad source {text!r}; expected x,y[,z]:mass") from None


def parse_emit(text: str) -> frozenset[str]:
    kinds = frozenset(k.strip() for k in text.split(",") if k.strip())
    unknown = kinds - set(EMIT_KINDS)
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown --emit kinds {sorted(unknown)}; choose from {EMIT_KINDS}")
    return kinds


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list of numbers {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sandpile", description=__doc__,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    sim = sub.add_parser("simulate", help="stabilize a configuration and write artifacts", formatter_class=fmt)
    sim.add_argument("--dim", type=int, default=2, help="lattice dimension d >= 2")
    sim.add_argument("--source", type=parse_source, action="append", required=True,
                     help="point mass x,y[,z]:mass; repeat for several sources")
    sim.add_argument("--threshold", type=float, default=10.0, help="threshold m")
    sim.add_argument("--eps-stop", type=float, default=None, help="stop when every excess is at most this (default 1e-12*n)")
    sim.add_argument("--schedule", choices=sorted(SCHEDULES), default="sweep", help="toppling schedule")
    sim.add_argument("--seed", type=int, default=0, help="seed of the random schedule")
    sim.add_argument("--out", default="sandpile", help="output prefix")
    sim.add_argument("--emit", type=parse_emit, default=frozenset({"image", "csv", "json"}),
                     help="comma list from image,csv,json,report")
    sim.add_argument("--threads", type=int, default=None, help="worker threads (overrides SANDPILE_THREADS)")
    sim.add_argument("--max-topplings", type=int, default=engine.DEFAULT_MAX_TOPPLINGS,
                     help="site-toppling cap before giving up")
    sim.add_argument("--lift-every", type=int, default=engine.DEFAULT_LIFT_EVERY,
                     help="sweeps between lower-bound lifts; 0 for pure toppling")

    rad = sub.add_parser("radial", help="solve the radial limit problem and print JSON", formatter_class=fmt)
    rad.add_argument("--dim", type=int, default=2)
    rad.add_argument("--threshold", type=float, default=10.0)
    rad.add_argument("--amplitude", type=float, default=None, help="point-source amplitude A (default 2d)")
    rad.add_argument("--tol", type=float, default=1e-10, help="residual tolerance")
    rad.add_argument("--out", default=None, help="write JSON here instead of stdout")

    ver = sub.add_parser("verify", help="run every check on a checkpoint", formatter_class=fmt)
    ver.add_argument("checkpoint", help="checkpoint prefix (reads PREFIX.csv and PREFIX.json)")
    ver.add_argument("--out", default=None, help="write the report here instead of stdout")

    cal = sub.add_parser("calibrate", help="doubling search for n(m)", formatter_class=fmt)
    cal.add_argument("--dim", type=int, default=2)
    cal.add_argument("--thresholds", type=parse_floats, default=[2.0, 4.0, 8.0], help="increasing comma list of m")
    cal.add_argument("--n-max", type=float, default=2.0**22, help="largest n tried")
    cal.add_argument("--budget", type=float, default=600.0, help="wall-clock budget in seconds")
    cal.add_argument("--threads", type=int, default=None)
    cal.add_argument("--out", default=None, help="write JSON here instead of stdout")
    return parser


def _glue_sources(argv: Sequence[str]) -> list[str]:
    # argparse reads "-47,0:5e4" as an option, so bind it to its flag first
    out, it = [], iter(argv)
    for token in it:
        if token == "--source":
            value = next(it, None)
            out.append(token if value is None else f"--source={value}")
        else:
            out.append(token)
    return out


def parse_args(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse and validate; invalid input exits with status 2 via argparse."""
    parser = build_parser()
    a = parser.parse_args(_glue_sources(sys.argv[1:] if argv is None else argv))
    if a.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    if hasattr(a, "dim") and a.dim < 2:
        parser.error(f"--dim must be at least 2, got {a.dim}")
    if getattr(a, "threshold", 1.0) <= 0:
        parser.error("--threshold must be positive")
    cfg = RunConfig(command=a.command)
    if a.command == "simulate":
        if a.eps_stop is not None and not a.eps_stop > 0:
            parser.error("--eps-stop must be positive")
        if a.threads is not None and a.threads < 1:
            parser.error("--threads must be at least 1")
        for x, mass in a.source:
            if len(x) != a.dim:
                parser.error(f"source {x} does not have {a.dim} coordinates")
            if not mass > 0:
                parser.error(f"source mass must be positive, got {mass}")
        cfg.d, cfg.sources, cfg.m = a.dim, a.source, a.threshold
        cfg.schedule = Schedule(SCHEDULES[a.schedule], a.seed)
        cfg.eps_stop, cfg.out_prefix, cfg.emit = a.eps_stop, a.out, a.emit
        cfg.threads, cfg.max_topplings = a.threads, a.max_topplings
        cfg.lift_every = a.lift_every or None
    elif a.command == "radial":
        if a.amplitude is not None and not a.amplitude > 0:
            parser.error("--amplitude must be positive")
        if not a.tol > 0:
            parser.error("--tol must be positive")
        cfg.d, cfg.m, cfg.amplitude, cfg.tol = a.dim, a.threshold, a.amplitude, a.tol
        cfg.out_prefix = a.out
    elif a.command == "verify":
        cfg.checkpoint, cfg.out_prefix = a.checkpoint, a.out
    else:
        ms = a.thresholds
        if not ms or any(v <= 0 for v in ms) or any(b <= a_ for a_, b in zip(ms, ms[1:])):
            parser.error("--thresholds must be an increasing list of positive numbers")
        cfg.d, cfg.m_list, cfg.n_max, cfg.time_budget = a.dim, ms, a.n_max, a.budget
        cfg.threads, cfg.out_prefix = a.threads, a.out
    return cfg


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, default=float)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _simulate(cfg: RunConfig) -> int:
    s = engine.new_state(cfg.d, cfg.sources, cfg.m)
    try:
        outcome = engine.stabilize(s, cfg.schedule, cfg.eps_stop, max_topplings=cfg.max_topplings,
                                   lift_every=cfg.lift_every, threads=cfg.threads)
    except NonConvergence as exc:
        print(json.dumps({"error": "non-convergence", "message": str(exc), "sweeps": exc.sweeps,
                          "topplings": exc.topplings, "residual_excess": exc.residual_excess}),
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    prefix = Path(cfg.out_prefix)
    written = []
    if cfg.emit & {"csv", "json"}:
        written += [str(p) for p in engine.save_checkpoint(s, prefix)]
    if "image" in cfg.emit:
        path = prefix.with_name(prefix.name + ".ppm")
        render.render_image(s, path)
        written.append(str(path))
    status = EXIT_OK
    if "report" in cfg.emit:
        report = verify.verify_state(s)
        path = prefix.with_name(prefix.name + ".report.json")
        _emit_json(report, str(path))
        written.append(str(path))
        status = EXIT_OK if report["passed"] else EXIT_CHECK
    summary = {"n": s.n, "m": s.m, "kappa": s.kappa, "sweeps": outcome.sweeps,
               "topplings": outcome.topplings, "lifts": outcome.lifts,
               "residual_excess": outcome.residual_excess, "elapsed": outcome.elapsed, "written": written}
    print(json.dumps(summary))
    return status


def _radial(cfg: RunConfig) -> int:
    p = analytic.RadialProblem.scaled(cfg.d, cfg.m, cfg.amplitude)
    sol = analytic.solve_radial(p, tol=cfg.tol)
    _emit_json({"d": p.d, "m": cfg.m, "lambda": p.lam, "A": p.A, "k": p.k, "a1": sol.a1, "a2": sol.a2,
                "a3": sol.a3, "r1": sol.r1, "r2": sol.r2, "residuals": list(sol.residuals)},
               cfg.out_prefix)
    return EXIT_OK


def _verify(cfg: RunConfig) -> int:
    s = engine.load_checkpoint(cfg.checkpoint)
    report = verify.verify_state(s)
    _emit_json(report, cfg.out_prefix)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def _calibrate(cfg: RunConfig) -> int:
    def solver(d, n, m):
        return verify.stabilized_single_source(d, n, m, threads=cfg.threads)

    cal = verify.calibrate_F(cfg.m_list, d=cfg.d, n_max=cfg.n_max, time_budget=cfg.time_budget, solver=solver)
    _emit_json({"schema": verify.REPORT_SCHEMA, "d": cfg.d, "m": cal.m_values, "n_raw": cal.n_raw,
                "n": cal.n_values, "sup_err": cal.sup_err, "truncated": cal.truncated}, cfg.out_prefix)
    return EXIT_OK


COMMANDS = {"simulate": _simulate, "radial": _radial, "verify": _verify, "calibrate": _calibrate}


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.command](cfg)
    except (InvalidConfig, NotApplicable) as exc:
        print(f"sandpile: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"sandpile: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if isinstance(exc.code, int) else EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
