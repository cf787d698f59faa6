"""Rate-energy frontier data over R_min for several lambda values.

Thin wrapper around ``otfsidet sweep``:

    python scripts/lambda_sweep.py --out lambda.csv
"""

import argparse

from otfsidet import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--realizations", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="lambda_sweep.csv")
    args = ap.parse_args(argv)
    return cli.main(
        [
            "sweep",
            "--seed", str(args.seed),
            "--threads", str(args.threads),
            "--out", args.out,
            "--set", f"realizations={args.realizations}",
            "--set", "r_min_list=[0, 20, 40, 60, 80, 100]",
            "--set", "lam_list=[0, 0.1, 0.5]",
            "--set", "speed_list=[300]",
            "--set", "err_var_list=[0]",
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())
