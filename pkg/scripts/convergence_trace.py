"""DC per GP solve for a few seeded channels (convergence-curve data).

    python scripts/convergence_trace.py --realizations 5 --out trace.csv
"""

import argparse
import csv
import sys

from otfsidet import cli, designer
from otfsidet.channel import tf_from_dd


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--realizations", type=int, default=5)
    ap.add_argument("--speed", type=float, default=300.0)
    ap.add_argument("--plain", action="store_true", help="disable extrapolated condensation points")
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    cfg = cli.ExperimentConfig(seed=args.seed)
    params = cfg.system()
    ext = designer.Extrapolation(enabled=not args.plain)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["realization", "step", "solves", "kind", "i_out"])
    for r in range(args.realizations):
        ch = tf_from_dd(cli.make_channel(cfg, r, args.speed, 0.0), params.dims)
        sol = designer.run(ch, params, extrapolation=ext)
        for k, t in enumerate(sol.trace):
            w.writerow([r, k, t["solves"], t["step"], repr(t["i_out"])])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
