"""Command line entry point: ``python -m hetres <command>``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import energy, stimgen
from ..analysis import participation_ratio
from . import container, pipeline, report
from .config import RunConfig, from_dict, load_config


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--resume", action="store_true", help="skip networks with existing checkpoints")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _values(text):
    out = []
    for tok in text.replace(",", " ").split():
        v = float(tok)
        out.append(int(v) if v.is_integer() and "." not in tok and "e" not in tok.lower() else v)
    return out


def cmd_stim(args):
    st = stimgen.synthesize(args.kind, args.duration, dt_sim=args.dt, seed=args.seed or 0)
    info = dict(kind=args.kind, K=st.K, samples=st.n_samples, dt=st.dt, time_scale=st.time_scale,
                raw_peak_freqs=list(st.raw_peak_freqs), compound_freq=stimgen.compound_frequency(st),
                mean=st.components.mean(axis=1).tolist(), var=st.components.var(axis=1).tolist())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        container.persist_state(os.path.join(args.out, f"stimulus_{args.kind}.hrsv"), st)
    print(json.dumps(info, indent=2))


def cmd_bench(args):
    cfg = _config(args)
    df = pipeline.run_benchmark(cfg, out=cfg.out, resume=args.resume)
    print(df.groupby("h")["score_mean"].mean().to_string())


def cmd_sweep(args):
    cfg = _config(args)
    df = pipeline.sweep(cfg, args.axis, _values(args.values), out=cfg.out, resume=args.resume)
    print(df.groupby([args.axis, "h"])["score_mean"].mean().to_string())


def cmd_analyze(args):
    if args.state:
        S = container.load_state(args.state)
        print(json.dumps(dict(d_pr=participation_ratio(S.X), N=S.N, L=S.L)))
        return
    df = pipeline.read_results(args.results)
    report.report(df, "overlap-cdf", args.out)
    per_net = (df[df["status"] == "ok"].groupby(["network_id", "h"])
               .agg(d_pr=("d_pr", "first"), overlap=("overlap", "mean")).reset_index())
    if args.out:
        per_net.to_csv(os.path.join(args.out, "alignment.csv"), index=False, float_format="%.17g")
    print(per_net.to_string(index=False))


def cmd_energy(args):
    if args.results:
        nc = report.network_costs(pipeline.read_results(args.results))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            nc.to_csv(os.path.join(args.out, "costs.csv"), index=False, float_format="%.17g")
        print(nc.to_string(index=False))
        return
    rc = energy.rate_cost(args.N, args.K, args.p, args.L, heterogeneous=args.heterogeneous)
    atp = energy.atp_cost(args.N, args.p, args.nu, args.J, args.T)
    print(json.dumps(dict(rate=dict(static=rc.static, dynamic=rc.dynamic, total=rc.total, unit=rc.unit),
                          atp=dict(static=atp.static, dynamic=atp.dynamic, total=atp.total, unit=atp.unit),
                          emulation_bias=energy.emulation_bias(args.nu) if args.nu > 0 else None), indent=2))


def cmd_report(args):
    df = pipeline.read_results(args.results)
    tab = report.report(df, args.kind, args.out)
    print(tab.to_string(index=False, max_rows=40))


def build_parser():
    ap = argparse.ArgumentParser(prog="hetres", description="heterogeneous reservoir benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stim", help="generate and inspect a stimulus")
    p.add_argument("--kind", default="lorenz", choices=["lorenz", "mackey_glass", "narma", "abs_sine"])
    p.add_argument("--duration", type=float, default=100.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_stim)

    p = sub.add_parser("bench", help="run the full benchmark of a config")
    _common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("sweep", help="sweep one network parameter")
    _common(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma- or space-separated list")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("analyze", help="overlap / participation ratio")
    p.add_argument("--results", help="results.csv of a run")
    p.add_argument("--state", help="state container (.hrsv)")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("energy", help="cost models")
    p.add_argument("--results")
    p.add_argument("--N", type=int, default=250)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--L", type=int, default=503800)
    p.add_argument("--nu", type=float, default=5.0)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--heterogeneous", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_energy)

    p = sub.add_parser("report", help="plot-data tables")
    p.add_argument("--results", required=True)
    p.add_argument("--kind", required=True, choices=list(report.KINDS))
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
