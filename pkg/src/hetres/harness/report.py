"""Plot-data tables derived from a results table.

Every table has columns (x, y, group, err) plus helpers; they are plain CSV
for any plotting tool.
"""
from __future__ import annotations

import os

import numpy as np
import pandas as pd

from .. import energy
from ..readout import ci95

KINDS = ("profile", "scatter", "tiers", "frontier", "overlap-cdf")
NET_COLS = ["model", "N", "J", "Ju", "Jn", "p", "f", "sigma0", "K", "profile"]
TASK_COLS = ["k", "delta", "d"]


def _ok(df):
    return df[df["status"] == "ok"] if "status" in df else df


def varying_axis(df):
    """The network column (other than h) that takes more than one value, if any."""
    for c in NET_COLS:
        if c in df and df[c].nunique() > 1:
            return c
    return None


def profile(df):
    """Mean score versus shift per (h, d)."""
    g = _ok(df).groupby(["h", "d", "delta"])["score_mean"]
    out = g.agg(["mean", ci95]).reset_index()
    return pd.DataFrame(dict(x=out["delta"], y=out["mean"], err=out["ci95"],
                             group=[f"h={h:g},d={d}" for h, d in zip(out["h"], out["d"])]))


def scatter(df):
    """(homogeneous score, heterogeneous score) per task and h > 0, averaged over replicates."""
    d = _ok(df)
    keys = [c for c in NET_COLS if c in d and c != "profile"] + TASK_COLS
    m = d.groupby(keys + ["h", "profile"], dropna=False)["score_mean"].mean().reset_index()
    hom = m[m["h"] == 0].drop(columns=["h", "profile"]).rename(columns={"score_mean": "x"})
    rows = []
    for (h, prof), het in m[m["h"] > 0].groupby(["h", "profile"]):
        j = het.merge(hom, on=keys)
        rows.append(pd.DataFrame(dict(x=j["x"], y=j["score_mean"], group=f"h={h:g},{prof}", err=0.0,
                                      k=j["k"], delta=j["delta"], d=j["d"])))
    return pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=["x", "y", "group", "err"])


def tiers(df, axis=None):
    """Mean score and 95% CI per (axis value, h, tier)."""
    d = _ok(df)
    axis = axis or varying_axis(d) or "N"
    # per-task means first, so the CI is over tasks
    per_task = d.groupby([axis, "h", "tier"] + TASK_COLS)["score_mean"].mean().reset_index()
    out = per_task.groupby([axis, "h", "tier"])["score_mean"].agg(["mean", ci95, "count"]).reset_index()
    return pd.DataFrame(dict(x=out[axis], y=out["mean"], err=out["ci95"],
                             group=[f"h={h:g},{t}" for h, t in zip(out["h"], out["tier"])],
                             h=out["h"], tier=out["tier"], n=out["count"], axis=axis))


def network_costs(df):
    """One row per network: mean score and total cost in the model's unit."""
    d = _ok(df)
    g = d.groupby("network_id")
    out = g.agg(score=("score_mean", "mean"), model=("model", "first"), h=("h", "first"),
                mem=("mem_words", "first"), flops=("flops", "first"), atp=("atp_total", "first"))
    out["cost"] = np.where(out["model"] == "LIF", out["atp"], out["mem"] + out["flops"])
    out["efficiency"] = energy.efficiency(out["score"], out["cost"])
    return out.reset_index()


def frontier(df, bins=20):
    nc = network_costs(df)
    rows = []
    for model, g in nc.groupby("model"):
        f = energy.min_cost_frontier(zip(g["score"], g["cost"]), bins)
        rows.append(pd.DataFrame(dict(x=f[:, 0], y=f[:, 1], group=model, err=0.0)))
    return pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=["x", "y", "group", "err"])


def overlap_cdf(df):
    d = _ok(df)
    rows = []
    for h, g in d.groupby("h"):
        v = np.sort(g["overlap"].to_numpy())
        rows.append(pd.DataFrame(dict(x=v, y=np.arange(1, v.size + 1) / v.size, group=f"h={h:g}", err=0.0)))
    return pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=["x", "y", "group", "err"])


def report(df, kind, out_dir=None, **kw):
    if df is None or len(df) == 0:
        raise ValueError("empty results table")
    fn = dict(profile=profile, scatter=scatter, tiers=tiers, frontier=frontier)
    fn["overlap-cdf"] = overlap_cdf
    if kind not in fn:
        raise ValueError(f"unknown report kind {kind!r}; choose from {KINDS}")
    table = fn[kind](df, **kw)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        table.to_csv(os.path.join(out_dir, f"{kind}.csv"), index=False, float_format="%.17g")
    return table
