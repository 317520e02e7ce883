"""Sweep one network axis (crossed with the configured h levels).

    python scripts/sweep.py configs/reduced.yaml J 0,1,4,10,30 --out runs/sweep_J
    python scripts/sweep.py configs/reduced.yaml profile lognormal,gamma,uniform,normal
"""
import argparse

from hetres.harness import pipeline, report
from hetres.harness.config import load_config


def parse(v):
    try:
        return float(v)
    except ValueError:
        return v


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("axis")
    ap.add_argument("values")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    values = [parse(v) for v in args.values.split(",")]
    if args.axis == "N":
        values = [int(v) for v in values]
    out = args.out or f"runs/sweep_{args.axis}"
    df = pipeline.sweep(cfg, args.axis, values, out=out, resume=True)
    print(df.groupby([args.axis, "h"])["score_mean"].mean().unstack().round(4))
    report.report(df, "tiers", out)


if __name__ == "__main__":
    main()
