"""Radii of the radial limit problem and the inner-radius limit as m grows.

    python scripts/radial_table.py
"""
import json

from sandpile import analytic
from sandpile.analytic import RadialProblem, solve_radial


def main() -> None:
    for d in (2, 3, 4):
        limit = analytic.limit_radius(d)
        for m in (1, 10, 100, 1e4, 1e6):
            sol = solve_radial(RadialProblem.scaled(d, m))
            print(json.dumps({"d": d, "m": m, "r1": sol.r1, "r2": sol.r2, "limit": limit,
                              "gap": limit - sol.r1, "max_residual": max(map(abs, sol.residuals))}))


if __name__ == "__main__":
    main()
