"""Paired OTFS/OFDM designs at several speeds (DC-vs-speed data).

    python scripts/speed_compare.py --realizations 50 --out speed.csv
"""

import argparse

from otfsidet import cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--realizations", type=int, default=50)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="speed_compare.csv")
    args = ap.parse_args(argv)
    return cli.main(
        [
            "compare",
            "--seed", str(args.seed),
            "--threads", str(args.threads),
            "--trials", str(args.trials),
            "--out", args.out,
            "--set", f"realizations={args.realizations}",
            "--set", "speed_list=[0, 30, 150, 300]",
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())
