"""Doubling search for the smallest n that brings the rescaled odometer within tol(m).

The literal choice ρ = tol = 1/m is met at the first n tried, because 1/m
is also the height of the limit profile; ``--strict f`` uses tol = f/m.

    python scripts/calibrate.py --m 2,4,8,16 --strict 0.05
"""
import argparse
import json

from sandpile import verify


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", default="2,4,8", help="increasing comma list of thresholds")
    parser.add_argument("--strict", type=float, default=None, help="use tol = STRICT/m")
    parser.add_argument("--budget", type=float, default=600.0)
    args = parser.parse_args()
    ms = [float(v) for v in args.m.split(",")]
    kwargs = {"tol_of_m": (lambda m: args.strict / m)} if args.strict else {}
    cal = verify.calibrate_F(ms, time_budget=args.budget, **kwargs)
    print(json.dumps({"m": cal.m_values, "n": cal.n_values, "n_raw": cal.n_raw,
                      "sup_err": cal.sup_err, "truncated": cal.truncated}))


if __name__ == "__main__":
    main()
