"""Implementation costs: FLOP/memory for rate networks, ATP for spiking networks.

Every cost model returns a :class:`CostReport` with an activity-independent
static part and an activity-dependent dynamic part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# ATP molecules per second
ATP_GLIA = 102e6        # per glial cell
ATP_RESTING = 342e6     # per neuron
ATP_PER_SPIKE = 120e6   # per neuron per Hz
ATP_SYN = 12.4e3        # presynaptic, per synapse per Hz
ATP_POSTSYN = 140e3     # postsynaptic receptors
ATP_RECYCLE = 11e3      # glutamate recycling
HOUSEKEEPING = 4.0 / 3.0

# the prose assigns 102M to neurons and 342M to glia, the equation the reverse;
# the equation is implemented and this note travels with every ATP report
ATP_NOTE = "resting: 102e6*N_glia + 342e6*N as in the budget equation (prose lists the constants swapped)"


@dataclass
class CostReport:
    static: float
    dynamic: float
    unit: str
    model: str
    params: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.static + self.dynamic


@dataclass(frozen=True)
class FlopConstants:
    c_v: float = 4.0  # decay, scale, noise add, state write
    c_r: float = 2.0  # recurrent multiply-accumulate
    c_f: float = 2.0  # feedforward multiply-accumulate


def rate_memory(N, K, p, heterogeneous):
    return N + K + int(round(N * N * p)) + N * K + (N if heterogeneous else 1)


def rate_cost(N, K, p, L, heterogeneous=True, flops: FlopConstants = FlopConstants()) -> CostReport:
    """Memory words (static) and floating-point operations over L steps (dynamic)."""
    mem = rate_memory(N, K, p, heterogeneous)
    fl = L * (flops.c_v * N + flops.c_r * N * N * p + flops.c_f * N * K)
    return CostReport(float(mem), float(fl), "flop+words", "rate",
                      dict(N=N, K=K, p=p, L=L, heterogeneous=heterogeneous,
                           c_v=flops.c_v, c_r=flops.c_r, c_f=flops.c_f))


def atp_rate(N, p, nu, J, N_glia=None, r=1.0):
    """Components of the ATP consumption rate (molecules/s)."""
    N_glia = N if N_glia is None else N_glia
    syn = N * N * p * nu * r * math.sqrt(J)
    return dict(resting=ATP_GLIA * N_glia + ATP_RESTING * N,
                spikes=ATP_PER_SPIKE * N * nu,
                presynaptic=ATP_SYN * syn,
                postsynaptic=ATP_POSTSYN * syn,
                recycling=ATP_RECYCLE * syn)


def atp_cost(N, p, nu, J, T, N_glia=None, r=1.0) -> CostReport:
    """Total = 4/3 * (sum of rate components) * T; static = resting * T."""
    for name, val in dict(N=N, p=p, nu=nu, J=J, T=T, r=r).items():
        if val < 0:
            raise ValueError(f"{name} must be non-negative")
    if N_glia is not None and N_glia < 0:
        raise ValueError("N_glia must be non-negative")
    parts = atp_rate(N, p, nu, J, N_glia, r)
    total = HOUSEKEEPING * sum(parts.values()) * T
    static = parts["resting"] * T
    return CostReport(static, total - static, "ATP", "atp",
                      dict(N=N, p=p, nu=nu, J=J, T=T, N_glia=N if N_glia is None else N_glia, r=r,
                           note=ATP_NOTE))


def emulation_bias(nu_set, v_thr=0.01, tau_m=0.01):
    """Constant bias voltage making a refractory-free LIF fire at nu_set Hz."""
    nu = np.asarray(nu_set, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("nu_set must be positive")
    out = v_thr / -np.expm1(-1.0 / (nu * tau_m))
    return float(out) if out.ndim == 0 else out


class NeuromorphicCostModel:
    """Joule-based cost from externally measured hardware figures.

    static = P_static * T; dynamic = E_syn * synaptic events + E_spike * spikes.
    """

    def __init__(self, static_power, energy_per_synaptic_event, energy_per_spike, name="neuromorphic"):
        self.static_power = float(static_power)
        self.e_syn = float(energy_per_synaptic_event)
        self.e_spike = float(energy_per_spike)
        self.name = name

    def cost(self, N, p, nu, T) -> CostReport:
        spikes = N * nu * T
        events = spikes * N * p
        return CostReport(self.static_power * T, self.e_syn * events + self.e_spike * spikes,
                          "J", self.name, dict(N=N, p=p, nu=nu, T=T))


def remap_score(s):
    """s' = exp(s - 1), mapping R^2 in (-inf, 1] onto (0, 1]."""
    return np.exp(np.asarray(s, dtype=float) - 1.0)


def efficiency(s, total_cost):
    """Convention: e = s' / total cost."""
    return remap_score(s) / np.asarray(total_cost, dtype=float)


def min_cost_frontier(records, bins=20, score_range=None):
    """Per score bin (uniform over the observed range), the minimal total cost.

    Pass ``score_range`` to pin the bin edges, e.g. to compare pools.

    ``records`` is a sequence of (score, cost). Returns an array of rows
    (bin_centre, min_cost, bin_index) for non-empty bins, ordered by bin.
    """
    rec = np.asarray(list(records), dtype=float).reshape(-1, 2)
    if rec.shape[0] == 0:
        return np.zeros((0, 3))
    s, c = rec[:, 0], rec[:, 1]
    lo, hi = (s.min(), s.max()) if score_range is None else score_range
    if hi == lo:
        return np.array([[lo, c.min(), 0.0]])
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, bins - 1)
    inside = (s >= lo) & (s <= hi)
    idx, c = idx[inside], c[inside]
    best = np.full(bins, np.inf)
    np.minimum.at(best, idx, c)
    keep = np.isfinite(best)
    centres = 0.5 * (edges[:-1] + edges[1:])
    return np.column_stack([centres[keep], best[keep], np.nonzero(keep)[0].astype(float)])
