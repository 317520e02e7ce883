"""End-to-end benchmark: build, simulate, fit, score, analyze and cost each network.

One work item is one network (all trials and tasks). States are streamed in
blocks straight into per-trial Gram accumulators, so memory does not grow with
the training length. Finished networks are checkpointed as ``parts/<id>.csv``
and skipped on resume.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from .. import analysis, energy, readout, seeds, stimgen, taskbench
from ..dynamics import LIFParams, LIFStream, LIStream, is_anomalous, quantize
from ..errors import IntegrationError, StabilityError
from ..topology import NetworkSpec, build_network
from .config import SCHEMA_VERSION, RunConfig, dump_config

log = logging.getLogger(__name__)

BLOCK = 16384
ROW_COLUMNS = [
    "network_id", "model", "replicate", "h", "profile", "N", "J", "Ju", "Jn", "p", "f", "sigma0", "K",
    "k", "delta", "d", "complexity", "tier", "score_mean", "score_std", "overlap", "d_pr",
    "n_components", "mem_words", "flops", "atp_static", "atp_dynamic", "atp_total", "mean_rate",
    "integrator", "anomaly", "solver", "status", "error", "schema_version",
]


def network_id(spec: NetworkSpec, model="LI"):
    return (f"{model}-N{spec.N}-h{spec.h:g}-{spec.profile}-J{spec.J:g}-Ju{spec.Ju:g}-Jn{spec.Jn:g}"
            f"-p{spec.p:g}-f{spec.f_exc:g}-s{spec.sigma0:g}-K{spec.K}-tau{spec.tau_mean:g}-r{spec.replicate}")


def plan_for(cfg: RunConfig, N):
    s = cfg.split
    return readout.plan_splits(N, s.dt, s.tau_y, s.tau_u, s.trials, s.warmup,
                               train_factor=s.train_factor, test_factor=s.test_factor)


# ---------------------------------------------------------------------------
# shared run context: stimulus, tasks, complexities


_STIM_CACHE = {}


def stimulus_for(cfg: RunConfig, max_steps):
    """Standardized stimulus covering ``max_steps`` simulation steps plus the task horizon."""
    s = cfg.split
    duration = max_steps * s.dt + 2 * s.tau_u + 1.0
    key = json.dumps([cfg.stimulus.kind, cfg.stimulus.params, cfg.stimulus.oversample, duration,
                      s.dt, cfg.seed], sort_keys=True, default=str)
    if key not in _STIM_CACHE:
        _STIM_CACHE.clear()  # one stimulus at a time; they can be large
        _STIM_CACHE[key] = stimgen.synthesize(
            cfg.stimulus.kind, duration, dt_sim=s.dt, seed=seeds.int_seed(cfg.seed, "stimgen"),
            params=cfg.stimulus.params, oversample=cfg.stimulus.oversample)
    return _STIM_CACHE[key]


def task_set(cfg: RunConfig):
    t = cfg.tasks
    return taskbench.generate_task_grid(tuple(t.k_set), tuple(t.d_set), t.delta_count, tuple(t.delta_range))


@dataclass
class RunContext:
    cfg: RunConfig
    stim: stimgen.Stimulus
    tasks: taskbench.TaskSet
    complexity: np.ndarray
    tiers: list
    window: slice
    similarity_median_abs: float = float("nan")


def _targets(tasks, stim, n0, n1, dt):
    return taskbench.eval_tasks(tasks, stim, np.arange(n0, n1) * dt).T


def task_statistics(tasks, stim, window: slice, dt, sim_window=100_000):
    """Complexity per task over ``window`` and the task-task similarity matrix over
    its first ``sim_window`` samples, both accumulated blockwise."""
    T = len(tasks)
    k_list = sorted({t.k for t in tasks})
    dot = np.zeros(T)
    yy = np.zeros(T)
    rr = {k: 0.0 for k in k_list}
    sy = np.zeros(T)
    syy = np.zeros((T, T))
    n_sim = 0
    sim_stop = min(window.stop, window.start + sim_window)
    for a in range(window.start, window.stop, BLOCK):
        b = min(a + BLOCK, window.stop)
        Y = _targets(tasks, stim, a, b, dt)
        t = np.arange(a, b) * dt
        refs = {k: stimgen.sample(stim, t, k - 1) for k in k_list}
        for k in k_list:
            rr[k] += float(refs[k] @ refs[k])
        kcol = np.array([t_.k for t_ in tasks])
        R = np.stack([refs[k] for k in kcol], axis=1)
        dot += np.einsum("ij,ij->j", Y, R)
        yy += np.einsum("ij,ij->j", Y, Y)
        if a < sim_stop:
            Ys = Y[: sim_stop - a]
            sy += Ys.sum(axis=0)
            syy += Ys.T @ Ys
            n_sim += Ys.shape[0]
    C = np.empty(T)
    for j, t in enumerate(tasks):
        C[j] = 0.0 if t.is_identity else min(1.0, max(0.0, 1 - abs(dot[j]) / np.sqrt(yy[j] * rr[t.k])))
    cov = syy - np.outer(sy, sy) / n_sim
    sd = np.sqrt(np.diag(cov))
    S = np.clip(cov / np.outer(sd, sd), -1, 1)
    return C, S


def prepare(cfg: RunConfig) -> RunContext:
    specs = cfg.network_specs()
    plans = [plan_for(cfg, N) for N in sorted({s.N for s in specs})]
    longest = max(plans, key=lambda p: p.total_steps)
    stim = stimulus_for(cfg, longest.total_steps)
    tasks = task_set(cfg)
    C, S = task_statistics(tasks, stim, longest.window(), cfg.split.dt, cfg.similarity_window)
    iu = np.triu_indices(len(tasks), 1)
    med = float(np.median(np.abs(S[iu]))) if iu[0].size else float("nan")
    return RunContext(cfg, stim, tasks, C, [taskbench.complexity_tier(c) for c in C],
                      longest.window(), med)


# ---------------------------------------------------------------------------
# one network


@dataclass
class NetworkResult:
    scores: np.ndarray  # (trials, T)
    alignment: analysis.AlignmentReport
    integrator: str
    anomaly: bool
    solver: str
    mean_rate: float
    steps: int


def _make_stream(cfg: RunConfig, net, stim, method, noise_seed):
    dt = cfg.split.dt
    if cfg.model == "LI":
        return LIStream(net, stim, dt, noise_seed, method)
    lc = cfg.lif
    p = LIFParams(lc.E, lc.v_reset, lc.v_thr, lc.tau_ref, None, lc.nu0)
    return LIFStream(net, stim, p, dt, noise_seed, method, tau_phi=lc.tau_phi_steps * dt)


def _run_stream(cfg, net, ctx, plan, method, noise_seed):
    stream = _make_stream(cfg, net, ctx.stim, method, noise_seed)
    N, T = net.N, len(ctx.tasks)
    accs = [readout.GramAccumulator(N, T) for _ in range(plan.trials)]
    test_acc = readout.GramAccumulator(N, T)
    regions = [(plan.train_slice(i), accs[i]) for i in range(plan.trials)] + [(plan.test_slice(), test_acc)]
    Xte = np.empty((plan.N_test, N))
    Yte = np.empty((plan.N_test, T))
    syy = np.zeros(T)
    te = plan.test_slice()
    n = 0
    total = plan.total_steps
    while n < total:
        m = min(BLOCK, total - n)
        X = stream.advance(m)
        if cfg.state_precision == "half":
            X, _ = quantize(X, "half")
        for sl, acc in regions:
            a, b = max(n, sl.start), min(n + m, sl.stop)
            if a >= b:
                continue
            Y = _targets(ctx.tasks, ctx.stim, a, b, cfg.split.dt)
            Xs = X[a - n:b - n]
            acc.add(Xs, Y)
            syy += np.einsum("ij,ij->j", Y, Y)
            if acc is test_acc:
                Xte[a - te.start:b - te.start] = Xs
                Yte[a - te.start:b - te.start] = Y
        n += m
    anomaly = is_anomalous(stream.saturated_fraction) if cfg.model == "LI" else False
    rate = stream.mean_rate if cfg.model == "LIF" else float("nan")
    return accs, test_acc, Xte, Yte, syy, anomaly, rate


def _moments(accs, syy):
    G = sum(a.G for a in accs)
    B = sum(a.B for a in accs)
    mom = analysis.MomentAccumulator(G.shape[0] - 1, B.shape[1])
    mom.n = int(round(G[-1, -1]))
    mom.sx, mom.sxx = G[:-1, -1].copy(), G[:-1, :-1].copy()
    mom.sy, mom.sxy = B[-1].copy(), B[:-1].copy()
    mom.syy = syy
    return mom


def evaluate_network(cfg: RunConfig, spec: NetworkSpec, ctx: RunContext) -> NetworkResult:
    net = build_network(spec)
    plan = plan_for(cfg, spec.N)
    noise_seed = seeds.int_seed(cfg.seed, "dynamics/noise", spec.replicate)
    method = cfg.method
    try:
        out = _run_stream(cfg, net, ctx, plan, method, noise_seed)
        if out[5] and method == "euler":
            raise IntegrationError("saturation anomaly")
    except (StabilityError, IntegrationError) as exc:
        if method == "exponential":
            raise
        log.info("%s: %s; re-integrating with the exponential scheme", network_id(spec, cfg.model), exc)
        anomaly_first = not isinstance(exc, StabilityError)
        method = "exponential"
        out = _run_stream(cfg, net, ctx, plan, method, noise_seed)
        out = out[:5] + (out[5] or anomaly_first,) + out[6:]
    accs, test_acc, Xte, Yte, syy, anomaly, rate = out
    scores = np.empty((plan.trials, len(ctx.tasks)))
    solver = "cholesky"
    Xa = np.hstack([Xte, np.ones((Xte.shape[0], 1))])
    for t, acc in enumerate(accs):
        beta, tag = acc.solve(cfg.lam)
        if tag != "cholesky":
            solver = tag
        with np.errstate(divide="ignore", invalid="ignore"):
            scores[t] = readout.r2(Yte.T, (Xa @ beta).T)
    align = _moments(accs + [test_acc], syy).report(cfg.variance_target)
    return NetworkResult(scores, align, method, bool(anomaly), solver, rate, plan.total_steps)


def _rows(cfg, spec, ctx, res: NetworkResult | None, error=None):
    nid = network_id(spec, cfg.model)
    base = dict(network_id=nid, model=cfg.model, replicate=spec.replicate, h=spec.h, profile=spec.profile,
                N=spec.N, J=spec.J, Ju=spec.Ju, Jn=spec.Jn, p=spec.p, f=spec.f_exc, sigma0=spec.sigma0,
                K=spec.K, schema_version=SCHEMA_VERSION)
    if res is None:
        row = dict.fromkeys(ROW_COLUMNS, np.nan)
        row.update(base, status="error", error=str(error), integrator="", tier="", solver="", anomaly=False)
        return [row]
    rc = energy.rate_cost(spec.N, spec.K, spec.p, res.steps, heterogeneous=spec.h > 0)
    atp = (energy.atp_cost(spec.N, spec.p, res.mean_rate, spec.J, res.steps * cfg.split.dt)
           if cfg.model == "LIF" else None)
    rows = []
    for j, t in enumerate(ctx.tasks):
        sc = res.scores[:, j]
        row = dict(base, k=t.k, delta=t.delta, d=t.d, complexity=ctx.complexity[j], tier=ctx.tiers[j],
                   score_mean=float(np.mean(sc)),
                   score_std=float(np.std(sc, ddof=1)) if sc.size > 1 else 0.0,
                   overlap=float(res.alignment.overlap[j]), d_pr=res.alignment.d_pr,
                   n_components=res.alignment.n_components, mem_words=rc.static, flops=rc.dynamic,
                   atp_static=atp.static if atp else np.nan, atp_dynamic=atp.dynamic if atp else np.nan,
                   atp_total=atp.total if atp else np.nan, mean_rate=res.mean_rate,
                   integrator=res.integrator, anomaly=res.anomaly, solver=res.solver, status="ok", error="")
        for i, v in enumerate(sc):
            row[f"score_t{i}"] = float(v)
        rows.append(row)
    return rows


def run_network(cfg: RunConfig, spec: NetworkSpec, ctx: RunContext | None = None):
    """Rows for one network; failures become a single error row."""
    with threadpool_limits(1):
        ctx = ctx or prepare(cfg)
        try:
            res = evaluate_network(cfg, spec, ctx)
        except Exception as exc:  # recorded, the sweep continues
            log.warning("network %s failed: %s", network_id(spec, cfg.model), exc)
            return _rows(cfg, spec, ctx, None, f"{type(exc).__name__}: {exc}")
        return _rows(cfg, spec, ctx, res)


# ---------------------------------------------------------------------------
# persistence


def _columns(cfg):
    return ROW_COLUMNS + [f"score_t{i}" for i in range(cfg.split.trials)]


def frame(rows, cfg):
    df = pd.DataFrame(rows)
    for c in _columns(cfg):
        if c not in df:
            df[c] = np.nan
    return df[_columns(cfg)]


def write_csv(df, path, header_lines=()):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        df.to_csv(f, index=False, float_format="%.17g")
    os.replace(tmp, path)


def read_results(path):
    return pd.read_csv(path, comment="#", keep_default_na=True)


def _worker(cfg_dict, spec_dict, part_path):
    from .config import from_dict
    cfg = from_dict(cfg_dict)
    spec = NetworkSpec(**spec_dict)
    ctx = prepare(cfg)
    df = frame(run_network(cfg, spec, ctx), cfg)
    write_csv(df, part_path)
    return part_path


def run_benchmark(cfg: RunConfig, out=None, resume=False, workers=None, ctx=None) -> pd.DataFrame:
    """Run every network of the config; returns the merged ResultsTable.

    With ``out`` set, per-network parts and ``results.csv`` / ``tasks.csv`` are
    written there; ``resume`` skips networks whose part already exists.
    """
    workers = cfg.workers if workers is None else workers
    specs = cfg.network_specs()
    if out is None:
        ctx = ctx or prepare(cfg)
        rows = []
        for s in specs:
            rows += run_network(cfg, s, ctx)
        return frame(rows, cfg)
    parts = os.path.join(out, "parts")
    os.makedirs(parts, exist_ok=True)
    paths = [os.path.join(parts, network_id(s, cfg.model) + ".csv") for s in specs]
    todo = [(s, p) for s, p in zip(specs, paths) if not (resume and os.path.exists(p))]
    ctx = ctx or prepare(cfg)
    write_tasks(ctx, os.path.join(out, "tasks.csv"))
    if workers > 1 and len(todo) > 1:
        from joblib import Parallel, delayed
        Parallel(n_jobs=workers)(delayed(_worker)(cfg.to_dict(), s.to_dict(), p) for s, p in todo)
    else:
        for s, p in todo:
            write_csv(frame(run_network(cfg, s, ctx), cfg), p)
    df = pd.concat([read_results(p) for p in paths], ignore_index=True)
    header = dump_config(cfg).splitlines() + [f"similarity_median_abs: {ctx.similarity_median_abs!r}"]
    write_csv(df, os.path.join(out, "results.csv"), header)
    return df


def write_tasks(ctx: RunContext, path):
    df = pd.DataFrame(dict(k=[t.k for t in ctx.tasks], delta=[t.delta for t in ctx.tasks],
                           d=[t.d for t in ctx.tasks], complexity=ctx.complexity, tier=ctx.tiers))
    write_csv(df, path, [f"similarity_median_abs: {ctx.similarity_median_abs!r}"])


def sweep(cfg: RunConfig, axis, values, **kw) -> pd.DataFrame:
    """Expand ``axis`` over ``values`` (crossed with the configured h levels) and run."""
    return run_benchmark(cfg.with_axis(axis, values), **kw)
