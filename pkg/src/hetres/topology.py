"""Balanced E/I random connectivity, input weights and time-constant profiles."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import sparse

from . import seeds as _seeds

PROFILES = ("lognormal", "gamma", "normal", "uniform")


@dataclass(frozen=True)
class NetworkSpec:
    """Hyperparameters of one reservoir. Defaults are the paper baseline."""

    N: int = 250
    p: float = 0.1
    f_exc: float = 0.8
    sigma0: float = 1.0
    J: float = 1.0
    Ju: float = 1.0
    Jn: float = 0.1
    K: int = 3
    tau_mean: float = 1.0
    h: float = 0.0
    profile: str = "lognormal"
    seed: int = 0
    replicate: int = 0
    tau_floor: float = 0.02  # 2 * default dt; only used by normal/uniform

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0.0 < self.f_exc < 1.0:
            raise ValueError("f_exc must lie in (0, 1)")
        if min(self.sigma0, self.J, self.Ju, self.Jn, self.h) < 0:
            raise ValueError("sigma0, gains and h must be non-negative")
        if self.K < 1 or not self.tau_mean > 0:
            raise ValueError("need K >= 1 and tau_mean > 0")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class Network:
    """A constructed reservoir.

    ``W`` and ``Wu`` are scaled (J/sqrt(Np), Ju/sqrt(K)); the unscaled draws are
    kept in ``W_unit`` / ``Wu_unit`` so gain sweeps can rescale without redrawing.
    Rows index the postsynaptic neuron, columns the presynaptic one.
    """

    spec: NetworkSpec
    W: sparse.csr_matrix
    Wu: np.ndarray
    tau: np.ndarray
    is_exc: np.ndarray
    W_unit: sparse.csr_matrix = None
    Wu_unit: np.ndarray = None
    tau_rejections: int = 0
    warnings: list = field(default_factory=list)

    @property
    def N(self):
        return self.spec.N

    @property
    def K(self):
        return self.spec.K

    @property
    def n_synapses(self):
        return int(self.W_unit.nnz if self.W_unit is not None else self.W.nnz)


def population_means(f_exc):
    """(mu_E, mu_I) with unit excitatory mean and f*mu_E + (1-f)*mu_I = 0."""
    return 1.0, -f_exc / (1.0 - f_exc)


def n_excitatory(N, f_exc):
    return int(round(f_exc * N))


def build_connectivity(spec: NetworkSpec):
    """Draw the recurrent matrix. Returns (W_scaled, W_unit, is_exc, warnings)."""
    N, p = spec.N, spec.p
    rng = _seeds.stream(spec.seed, "topology/W", spec.replicate)
    mask = rng.random((N, N)) < p
    np.fill_diagonal(mask, False)
    n_e = n_excitatory(N, spec.f_exc)
    is_exc = np.zeros(N, dtype=bool)
    is_exc[:n_e] = True
    mu_e, mu_i = population_means(spec.f_exc)
    rows, cols = np.nonzero(mask)
    mu = np.where(is_exc[cols], mu_e, mu_i)
    vals = mu + spec.sigma0 * rng.standard_normal(rows.size)
    W_unit = sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))
    W_unit.sort_indices()
    notes = []
    if N * p < 1:
        msg = f"sparse network: N*p = {N * p:g} < 1 expected inputs per neuron"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return scale_recurrent(W_unit, spec), W_unit, is_exc, notes


def scale_recurrent(W_unit, spec: NetworkSpec):
    if spec.p == 0 or spec.J == 0:
        W = sparse.csr_matrix((spec.N, spec.N))
    else:
        W = W_unit * (spec.J / math.sqrt(spec.N * spec.p))
    W = sparse.csr_matrix(W)
    W.eliminate_zeros()
    return W


def build_input_weights(spec: NetworkSpec):
    """Dense N x K feedforward matrix. Returns (Wu_scaled, Wu_unit)."""
    rng = _seeds.stream(spec.seed, "topology/Wu", spec.replicate)
    unit = rng.standard_normal((spec.N, spec.K))
    return unit * (spec.Ju / math.sqrt(spec.K)), unit


def profile_parameters(profile, m, v):
    """Distribution parameters matching mean m and variance v."""
    if profile == "lognormal":
        return dict(mu=math.log(m * m / math.sqrt(m * m + v)), sigma2=math.log1p(v / (m * m)))
    if profile == "gamma":
        return dict(shape=m * m / v, scale=v / m)
    if profile == "normal":
        return dict(loc=m, scale=math.sqrt(v))
    if profile == "uniform":
        half = math.sqrt(3.0 * v)
        return dict(low=m - half, high=m + half)
    raise ValueError(f"unknown profile {profile!r}")


def sample_time_constants(N, tau_mean=1.0, h=0.0, profile="lognormal", seed=0, *,
                          replicate=0, tau_floor=0.02, return_rejections=False):
    """Per-neuron time constants with mean ``tau_mean`` and variance ``h * tau_mean**2``.

    h=0 returns the constant vector without touching the RNG. The lognormal
    draw is exp(mu + sigma*z) with z from a stream that does not depend on h,
    so networks differing only in h have rank-identical time constants.
    Normal and uniform samples below ``tau_floor`` are redrawn.
    """
    if not tau_mean > 0 or h < 0:
        raise ValueError("need tau_mean > 0 and h >= 0")
    if h == 0:
        tau = np.full(N, float(tau_mean))
        return (tau, 0) if return_rejections else tau
    m, v = float(tau_mean), h * float(tau_mean) ** 2
    par = profile_parameters(profile, m, v)
    rng = _seeds.stream(seed, "topology/tau", replicate)
    rejected = 0
    if profile == "lognormal":
        tau = np.exp(par["mu"] + math.sqrt(par["sigma2"]) * rng.standard_normal(N))
    elif profile == "gamma":
        tau = rng.gamma(par["shape"], par["scale"], N)
        # shape < 1 can underflow to exactly 0; keep tau strictly positive
        tau = np.maximum(tau, np.finfo(float).tiny)
    else:
        draw = ((lambda n: rng.normal(par["loc"], par["scale"], n)) if profile == "normal"
                else (lambda n: rng.uniform(par["low"], par["high"], n)))
        tau = draw(N)
        bad = tau < tau_floor
        while bad.any():
            rejected += int(bad.sum())
            tau[bad] = draw(int(bad.sum()))
            bad = tau < tau_floor
    return (tau, rejected) if return_rejections else tau


def build_network(spec: NetworkSpec) -> Network:
    W, W_unit, is_exc, notes = build_connectivity(spec)
    Wu, Wu_unit = build_input_weights(spec)
    tau, rej = sample_time_constants(spec.N, spec.tau_mean, spec.h, spec.profile, spec.seed,
                                     replicate=spec.replicate, tau_floor=spec.tau_floor,
                                     return_rejections=True)
    return Network(spec, W, Wu, tau, is_exc, W_unit, Wu_unit, rej, notes)
