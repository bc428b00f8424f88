"""Two equal point masses at (±a, 0) in d = 2.

Writes PPM images, checkpoints and verification reports for a = 47 (two
blobs that merge into a peanut) and a = 41 (a stadium).

    python scripts/two_sources.py --out results/two_sources
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from sandpile import engine, render, verify


@dataclass(frozen=True)
class TwoSourceConfig:
    offsets: tuple[int, ...] = (47, 41)
    mass: float = 5e4
    m: float = 10.0
    out: str = "results/two_sources"


def run(cfg: TwoSourceConfig) -> list[dict]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for a in cfg.offsets:
        s = engine.new_state(2, [((-a, 0), cfg.mass), ((a, 0), cfg.mass)], cfg.m)
        outcome = engine.stabilize(s)
        prefix = out / f"offset{a}"
        engine.save_checkpoint(s, prefix)
        render.render_image(s, prefix.with_suffix(".ppm"))
        report = verify.verify_state(s)
        (out / f"offset{a}.report.json").write_text(json.dumps(report, indent=2, default=float))
        count, bound = engine.boundary_count_bound(s)
        rows.append({"offset": a, "passed": report["passed"], "sweeps": outcome.sweeps,
                     "seconds": round(outcome.elapsed, 2), "boundary": count, "bound": bound})
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=TwoSourceConfig.out)
    parser.add_argument("--mass", type=float, default=TwoSourceConfig.mass)
    args = parser.parse_args()
    cfg = TwoSourceConfig(mass=args.mass, out=args.out)
    print(json.dumps(asdict(cfg)))
    for row in run(cfg):
        print(json.dumps(row))


if __name__ == "__main__":
    main()
