"""Run the benchmark for a config and print mean scores per tier and h.

    python scripts/run_baseline.py configs/reduced.yaml --out runs/reduced
"""
import argparse

from hetres.harness import pipeline, report
from hetres.harness.config import load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--out", default="runs/baseline")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    df = pipeline.run_benchmark(cfg, out=args.out, resume=True, workers=args.workers)
    print(df.groupby(["h", "tier"])["score_mean"].mean().unstack().round(4))
    report.report(df, "scatter", args.out)
    report.report(df, "tiers", args.out)


if __name__ == "__main__":
    main()
