"""Mass 10⁶ at the origin in d = 2 for thresholds 10, 100, 1000 and 5000.

For each threshold this writes a PPM image and prints the measured shape
next to the radial limit radii.  Large thresholds leave the continuum
regime at this n (m should stay well below n^{1/d} = 1000), so their
rescaled radii fall short of the limit values.

    python scripts/thresholds.py --out results/thresholds [--n 1e6]
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from sandpile import engine, render, verify
from sandpile.analytic import RadialProblem, solve_radial


@dataclass(frozen=True)
class ThresholdsConfig:
    n: float = 1e6
    thresholds: tuple[float, ...] = (10, 100, 1000, 5000)
    out: str = "results/thresholds"


def run(cfg: ThresholdsConfig) -> list[dict]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for m in cfg.thresholds:
        s = engine.new_state(2, [((0, 0), cfg.n)], m)
        outcome = engine.stabilize(s)
        render.render_image(s, out / f"m{m:g}.ppm")
        support, core = verify.rescaled_radii(s)
        sol = solve_radial(RadialProblem.scaled(2, m))
        shape = verify.measure_regions(s)
        rows.append({"m": m, "seconds": round(outcome.elapsed, 1), "lifts": outcome.lifts,
                     "support": support, "r2": sol.r2, "core": core, "r1": sol.r1,
                     "roundness": shape.roundness, "boundary": shape.boundary_count})
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=float, default=ThresholdsConfig.n)
    parser.add_argument("--out", default=ThresholdsConfig.out)
    args = parser.parse_args()
    cfg = ThresholdsConfig(n=args.n, out=args.out)
    print(json.dumps(asdict(cfg)))
    for row in run(cfg):
        print(json.dumps(row))


if __name__ == "__main__":
    main()
