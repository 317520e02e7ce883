"""Leaky-integrator (rate) and leaky integrate-and-fire (spiking) network dynamics.

Both models are advanced on a fixed grid ``t_n = n*dt`` in time-major chunks so
arbitrarily long runs can be streamed into the readout without holding the full
state in memory. ``simulate_li`` / ``simulate_lif`` are the in-memory wrappers.

Noise comes from one counter-based stream per neuron, so a trajectory does not
depend on the chunk size or on how runs are distributed over workers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize, special

from . import seeds as _seeds
from .errors import InfeasibleRateError, IntegrationError, StabilityError
from .stimgen import Stimulus, sample_all
from .topology import Network

CHUNK = 8192
SATURATION_EPS = 1e-6
SATURATION_FRACTION = 0.01


# the sigmoid never reaches 0 or 1; round saturated values into the open interval
R_MIN = float(np.nextafter(0.0, 1.0))
R_MAX = float(np.nextafter(1.0, 0.0))


def activation(v):
    """Logistic sigmoid 1/(1+exp(-v)), kept strictly inside (0, 1)."""
    return np.clip(special.expit(v), R_MIN, R_MAX)


@dataclass
class StateMatrix:
    """Network trajectory. ``X`` has shape (N, L); column n is the state at n*dt."""

    X: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def L(self):
        return self.X.shape[1]


@dataclass
class SpikeRaster:
    """Spikes as parallel (neuron, step) arrays sorted by step then neuron.

    A spike produced by the update starting at step s is stamped at step s+1,
    i.e. at time (s+1)*dt.
    """

    neurons: np.ndarray
    steps: np.ndarray
    dt: float
    N: int
    n_steps: int
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.steps * self.dt

    @property
    def duration(self):
        return self.n_steps * self.dt

    def spike_times(self, i):
        return self.times[self.neurons == i]

    def counts(self):
        return np.bincount(self.neurons, minlength=self.N)

    def rates(self):
        return self.counts() / self.duration

    @classmethod
    def from_times(cls, times_per_neuron, dt, n_steps):
        neu, st = [], []
        for i, ts in enumerate(times_per_neuron):
            neu.append(np.full(len(ts), i, dtype=np.int64))
            st.append(np.rint(np.asarray(ts, dtype=float) / dt).astype(np.int64))
        neu = np.concatenate(neu) if neu else np.zeros(0, np.int64)
        st = np.concatenate(st) if st else np.zeros(0, np.int64)
        order = np.lexsort((neu, st))
        return cls(neu[order], st[order], dt, len(times_per_neuron), n_steps)


@dataclass
class LIFParams:
    """LIF constants in mV and seconds. ``v_bg`` is the background drive relative to E."""

    E: float = -70.0
    v_reset: float = -70.0
    v_thr: float = -69.0
    tau_ref: float = 0.002
    v_bg: np.ndarray | float | None = None
    nu0: float = 5.0

    def __post_init__(self):
        if not self.v_thr > self.v_reset:
            raise ValueError("v_thr must exceed v_reset")
        if not self.tau_ref >= 0:
            raise ValueError("tau_ref must be non-negative")

    @property
    def theta(self):
        return self.v_thr - self.E

    @property
    def rho(self):
        return self.v_reset - self.E


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _sigmoid(x):
    return min(max(1.0 / (1.0 + math.exp(-x)), R_MIN), R_MAX)


@njit(cache=True)
def _li_chunk(v, indptr, indices, data, ff, has_ff, noise, has_noise, a, b, decay, exp_method, out):
    n, N = out.shape
    r = np.empty(N)
    for i in range(N):
        r[i] = _sigmoid(v[i])
    for s in range(n):
        for i in range(N):
            out[s, i] = r[i]
        for i in range(N):
            acc = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                acc += data[q] * r[indices[q]]
            if has_ff:
                acc += ff[s, i]
            xi = noise[s, i] if has_noise else 0.0
            if exp_method:
                d = acc + b[i] * xi
                v[i] = d + (v[i] - d) * decay[i]
            else:
                v[i] += a[i] * (acc - v[i]) + b[i] * xi
            if not math.isfinite(v[i]):
                return s
        for i in range(N):
            r[i] = _sigmoid(v[i])
    return -1


@njit(cache=True)
def _lif_chunk(u, refr, prev, indptr, indices, jump, bg, ff, has_ff, noise, has_noise,
               a, b, decay, exp_method, theta, rho, hold, spikes):
    n, N = spikes.shape
    for s in range(n):
        for i in range(N):
            syn = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                if prev[indices[q]]:
                    syn += jump[q]
            d = bg[i]
            if has_ff:
                d += ff[s, i]
            xi = noise[s, i] if has_noise else 0.0
            if exp_method:
                d += b[i] * xi
                u[i] = d + (u[i] - d) * decay[i] + syn
            else:
                u[i] += a[i] * (d - u[i]) + b[i] * xi + syn
            if not math.isfinite(u[i]):
                return s
            if refr[i] > 0:
                u[i] = rho
                refr[i] -= 1
                spikes[s, i] = 0
            elif u[i] >= theta:
                u[i] = rho
                refr[i] = hold
                spikes[s, i] = 1
            else:
                spikes[s, i] = 0
        for i in range(N):
            prev[i] = spikes[s, i]
    return -1


@njit(cache=True)
def _exp_filter(x, counts, decay, out):
    n, N = counts.shape
    for s in range(n):
        for i in range(N):
            x[i] = x[i] * decay + counts[s, i]
            out[s, i] = x[i]


# ---------------------------------------------------------------------------
# shared plumbing


class _Driver:
    """Feedforward input and noise for chunked integration."""

    def __init__(self, net: Network, stim: Stimulus | None, dt, noise_seed, Jn):
        self.net, self.stim, self.dt = net, stim, float(dt)
        self.Jn = float(Jn)
        self.has_ff = stim is not None and bool(np.any(net.Wu))
        if stim is not None and stim.K != net.Wu.shape[1]:
            raise ValueError(f"stimulus has K={stim.K}, network expects K={net.Wu.shape[1]}")
        self.has_noise = self.Jn > 0
        self._gens = ([_seeds.counter_stream(noise_seed, "dynamics/noise/neuron", i)
                       for i in range(net.N)] if self.has_noise else None)
        self._dummy = np.zeros((1, 1))

    def feedforward(self, n0, n):
        if not self.has_ff:
            return self._dummy
        t = (n0 + np.arange(n)) * self.dt
        u = sample_all(self.stim, t)
        # explicit sum over K: BLAS rounding would depend on the block length
        out = np.zeros((n, self.net.N))
        for k in range(u.shape[0]):
            out += u[k][:, None] * self.net.Wu[:, k][None, :]
        return out

    def noise(self, n):
        if not self.has_noise:
            return self._dummy
        out = np.empty((n, len(self._gens)))
        for i, g in enumerate(self._gens):
            out[:, i] = g.standard_normal(n)
        return out


def _coefficients(tau, dt, Jn, method):
    tau = np.asarray(tau, dtype=float)
    if method == "euler":
        return dt / tau, Jn * math.sqrt(dt) / tau, np.zeros_like(tau), False
    if method == "exponential":
        # drive held constant over the step, white noise as its step average
        return np.zeros_like(tau), np.full_like(tau, Jn / math.sqrt(dt)), np.exp(-dt / tau), True
    raise ValueError(f"unknown integration method {method!r}")


def check_stability(tau, dt):
    tmin = float(np.min(tau))
    if dt > tmin / 2:
        raise StabilityError(f"dt={dt:g} exceeds min(tau)/2 = {tmin / 2:g}; use method='exponential'")


class LIStream:
    """Chunked LI integrator. ``advance(n)`` returns states for the next n grid points."""

    def __init__(self, net: Network, stim: Stimulus | None, dt=0.01, noise_seed=0,
                 method="euler", v0=None, Jn=None):
        Jn = net.spec.Jn if Jn is None else Jn
        if method == "euler":
            check_stability(net.tau, dt)
        self.dt, self.method = float(dt), method
        self.drv = _Driver(net, stim, dt, noise_seed, Jn)
        self.a, self.b, self.decay, self.exp = _coefficients(net.tau, dt, Jn, method)
        W = net.W.tocsr()
        self.indptr, self.indices = W.indptr.astype(np.int64), W.indices.astype(np.int64)
        self.data = W.data.astype(float)
        self.v = np.zeros(net.N) if v0 is None else np.array(v0, dtype=float)
        self.n = 0
        self.n_saturated = 0
        self.n_values = 0

    def advance(self, n):
        out = np.empty((n, len(self.v)))
        for s0 in range(0, n, CHUNK):
            m = min(CHUNK, n - s0)
            blk = out[s0:s0 + m]
            bad = _li_chunk(self.v, self.indptr, self.indices, self.data,
                            self.drv.feedforward(self.n, m), self.drv.has_ff,
                            self.drv.noise(m), self.drv.has_noise,
                            self.a, self.b, self.decay, self.exp, blk)
            if bad >= 0:
                step = self.n + bad
                raise IntegrationError(f"non-finite LI state at step {step}", time=step * self.dt)
            self.n_saturated += int(np.count_nonzero((blk < SATURATION_EPS) | (blk > 1 - SATURATION_EPS)))
            self.n_values += blk.size
            self.n += m
        return out

    @property
    def saturated_fraction(self):
        return self.n_saturated / max(1, self.n_values)


def simulate_li(net: Network, stim: Stimulus | None, L: int, dt=0.01, noise_seed=0,
                method="euler", v0=None, Jn=None) -> StateMatrix:
    """LI rates r(v(t_n)) for n = 0..L-1 starting from v(0)=0 (or ``v0``).

    Euler update per step::

        v += dt/tau * (-v + W r(v) + Wu u(t_n)) + Jn/tau * sqrt(dt) * xi

    ``method='exponential'`` integrates the leak exactly with the drive frozen
    over the step; it is stable for any tau and is the fallback integrator.
    """
    st = LIStream(net, stim, dt, noise_seed, method, v0, Jn)
    blk = st.advance(int(L))
    return StateMatrix(blk.T, dt, dict(model="LI", method=method, noise_seed=noise_seed,
                                       saturated_fraction=st.saturated_fraction))


def is_anomalous(saturated_fraction):
    return saturated_fraction > SATURATION_FRACTION


# ---------------------------------------------------------------------------
# LIF


def background_voltage(nu, tau, params: LIFParams = None):
    """Constant drive (relative to E) that makes a noise-free LIF fire at ``nu`` Hz.

    From the interspike interval tau*ln((D - rho)/(D - theta)) + tau_ref with
    theta = v_thr - E and rho = v_reset - E::

        D = (theta*z - rho)/(z - 1),  z = exp(1/(nu*tau) - tau_ref/tau)

    written as theta + (theta - rho)/expm1(.) for accuracy at small tau.
    """
    params = params or LIFParams()
    nu = float(nu)
    if not nu > 0:
        raise ValueError("nu must be positive")
    if params.tau_ref > 0 and nu >= 1.0 / params.tau_ref:
        raise InfeasibleRateError(f"nu={nu:g} Hz is not below 1/tau_ref = {1 / params.tau_ref:g} Hz")
    tau = np.asarray(tau, dtype=float)
    x = (1.0 / nu - params.tau_ref) / tau
    with np.errstate(over="ignore"):
        return params.theta + (params.theta - params.rho) / np.expm1(x)


class LIFStream:
    """Chunked LIF integrator with exponential spike filtering.

    ``advance(n)`` returns the filtered state x(t_n) = sum_f exp(-(t_n - t_f)/tau_phi)
    over spikes stamped at or before t_n, for the next n grid points.
    """

    def __init__(self, net: Network, stim: Stimulus | None, params: LIFParams = None, dt=0.01,
                 noise_seed=0, method="euler", tau_phi=None, u0=None, Jn=None, record=False):
        params = params or LIFParams()
        Jn = net.spec.Jn if Jn is None else Jn
        if method == "euler":
            check_stability(net.tau, dt)
        self.p, self.dt, self.method = params, float(dt), method
        self.tau_phi = 10 * dt if tau_phi is None else tau_phi
        self.drv = _Driver(net, stim, dt, noise_seed, Jn)
        self.a, self.b, self.decay, self.exp = _coefficients(net.tau, dt, Jn, method)
        bg = params.v_bg if params.v_bg is not None else background_voltage(params.nu0, net.tau, params)
        self.bg = np.broadcast_to(np.asarray(bg, dtype=float), (net.N,)).copy()
        W = net.W.tocsr()
        self.indptr, self.indices = W.indptr.astype(np.int64), W.indices.astype(np.int64)
        rows = np.repeat(np.arange(net.N), np.diff(W.indptr))
        self.jump = W.data * (params.tau_ref / net.tau[rows])
        self.hold = max(1, int(round(params.tau_ref / dt)))
        self.u = np.full(net.N, params.rho) if u0 is None else np.array(u0, dtype=float)
        self.refr = np.zeros(net.N, dtype=np.int64)
        self.prev = np.zeros(net.N, dtype=np.uint8)
        self.pending = np.zeros(net.N, dtype=np.uint8)
        self.x = np.zeros(net.N)
        self.n = 0
        self.spike_count = np.zeros(net.N, dtype=np.int64)
        self.record = record
        self._neu, self._stp = [], []

    def _step_spikes(self, m):
        spk = np.empty((m, len(self.u)), dtype=np.uint8)
        bad = _lif_chunk(self.u, self.refr, self.prev, self.indptr, self.indices, self.jump,
                         self.bg, self.drv.feedforward(self.n, m), self.drv.has_ff,
                         self.drv.noise(m), self.drv.has_noise, self.a, self.b, self.decay,
                         self.exp, self.p.theta, self.p.rho, self.hold, spk)
        if bad >= 0:
            step = self.n + bad
            raise IntegrationError(f"non-finite LIF state at step {step}", time=step * self.dt)
        self.spike_count += spk.sum(axis=0, dtype=np.int64)
        if self.record:
            s, i = np.nonzero(spk)
            self._stp.append(self.n + s + 1)
            self._neu.append(i)
        self.n += m
        return spk

    def spikes(self, n, keep=True):
        """Advance n updates and return the (n, N) spike indicator (row s = stamp s+1).

        With ``keep=False`` only the counters (and the raster, if recording) are updated.
        """
        out = np.empty((n, len(self.u)), dtype=np.uint8) if keep else None
        for s0 in range(0, n, CHUNK):
            m = min(CHUNK, n - s0)
            spk = self._step_spikes(m)
            if keep:
                out[s0:s0 + m] = spk
        return out

    def advance(self, n):
        out = np.empty((n, len(self.u)))
        dec = math.exp(-self.dt / self.tau_phi)
        for s0 in range(0, n, CHUNK):
            m = min(CHUNK, n - s0)
            spk = self._step_spikes(m)
            counts = np.empty_like(spk)
            counts[0] = self.pending
            counts[1:] = spk[:-1]
            self.pending = spk[-1].copy()
            _exp_filter(self.x, counts, dec, out[s0:s0 + m])
        return out

    def raster(self):
        neu = np.concatenate(self._neu) if self._neu else np.zeros(0, np.int64)
        stp = np.concatenate(self._stp) if self._stp else np.zeros(0, np.int64)
        order = np.lexsort((neu, stp))
        return SpikeRaster(neu[order].astype(np.int64), stp[order].astype(np.int64), self.dt,
                           len(self.u), self.n, dict(model="LIF", method=self.method, hold=self.hold))

    @property
    def mean_rate(self):
        return float(self.spike_count.mean() / (self.n * self.dt)) if self.n else 0.0


def simulate_lif(net: Network, stim: Stimulus | None, params: LIFParams = None, L: int = 1000,
                 dt=0.01, noise_seed=0, method="euler", Jn=None) -> SpikeRaster:
    """Run L updates from v = v_reset and return the spike raster (stamps 1..L).

    Per update: Euler step with drive v_bg + Wu u + noise, plus an instantaneous
    jump (tau_ref/tau_i) W_ij for every presynaptic spike of the previous step;
    then the refractory clamp, then threshold detection and reset.
    """
    st = LIFStream(net, stim, params, dt, noise_seed, method, Jn=Jn, record=True)
    st.spikes(int(L), keep=False)
    return st.raster()


def spikes_to_state(raster: SpikeRaster, dt=None, tau_phi=None, L=None) -> StateMatrix:
    """Filter spikes with exp(-t/tau_phi) on the grid n*dt, n = 0..L-1."""
    dt = raster.dt if dt is None else dt
    tau_phi = 10 * dt if tau_phi is None else tau_phi
    if not tau_phi > 0:
        raise ValueError("tau_phi must be positive")
    L = raster.n_steps + 1 if L is None else int(L)
    steps = np.rint(raster.steps * (raster.dt / dt)).astype(np.int64)
    keep = steps < L
    counts = np.zeros((L, raster.N))
    np.add.at(counts, (steps[keep], raster.neurons[keep]), 1.0)
    out = np.empty_like(counts)
    _exp_filter(np.zeros(raster.N), counts, math.exp(-dt / tau_phi), out)
    return StateMatrix(out.T, dt, dict(model="LIF-filtered", tau_phi=tau_phi))


# ---------------------------------------------------------------------------
# rate matching between the two neuron models


def lif_rate_curve(I, R=1.0, params: LIFParams = None, tau_m=0.01):
    """Equilibrium LIF rate normalized by 1/tau_ref; zero at or below rheobase."""
    params = params or LIFParams()
    RI = R * np.asarray(I, dtype=float)
    th, rh = params.theta, params.rho
    out = np.zeros_like(RI)
    ok = RI > th
    with np.errstate(divide="ignore", invalid="ignore"):
        out[ok] = 1.0 / (1.0 + (tau_m / params.tau_ref) * np.log((RI[ok] - rh) / (RI[ok] - th)))
    return out if out.ndim else float(out)


def midpoint_reset(theta, tau_ref, tau_m):
    """Reset (relative to E) giving half-maximal rate at zero input."""
    return theta * math.exp(tau_ref / tau_m)


@dataclass
class MatchResult:
    params: LIFParams
    objective: float
    initial_objective: float
    converged: bool
    n_iter: int


def match_objective(theta, rho, I, R, tau_ref, tau_m, E=0.0):
    if not theta > rho:
        return np.inf
    p = LIFParams(E=E, v_reset=E + rho, v_thr=E + theta, tau_ref=tau_ref)
    return float(np.sum((activation(I) - lif_rate_curve(I, R, p, tau_m)) ** 2))


def match_lif_to_li(domain=(-5.0, 5.0), params: LIFParams = None, tau_m=0.01, R=1.0,
                    constrain_midpoint=False, n_grid=200, maxiter=2000) -> MatchResult:
    """Fit LIF threshold/reset so the LIF rate curve tracks the LI sigmoid on ``domain``.

    Only theta = v_thr - E and rho = v_reset - E enter the rate curve, so E is
    kept and the two differences are optimized with Nelder-Mead. With
    ``constrain_midpoint`` the reset is tied to the threshold so that r_s(0)=1/2
    and only theta is searched.
    """
    params = params or LIFParams()
    if n_grid < 100:
        raise ValueError("use at least 100 grid points")
    I = np.linspace(domain[0], domain[1], n_grid)
    tr, tm, E = params.tau_ref, tau_m, params.E

    if constrain_midpoint:
        th0 = params.theta if params.theta < 0 else -abs(params.theta) or -1.0

        def f(x):
            return match_objective(x[0], midpoint_reset(x[0], tr, tm), I, R, tr, tm)

        # theta must be negative for rho = theta*exp(.) < theta
        def g(x):
            return f(x) if x[0] < 0 else np.inf

        init = g([th0])
        res = optimize.minimize(g, [th0], method="Nelder-Mead",
                                options=dict(maxiter=maxiter, xatol=1e-10, fatol=1e-14))
        th = float(res.x[0])
        rh = midpoint_reset(th, tr, tm)
    else:
        def f(x):
            return match_objective(x[0], x[1], I, R, tr, tm)

        init = f([params.theta, params.rho])
        # the objective is flat wherever the LIF stays silent on the whole domain,
        # so also start from the midpoint-constrained fit and keep the better run
        mid = match_lif_to_li(domain, params, tau_m, R, True, n_grid, maxiter).params
        starts = [[params.theta, params.rho], [mid.theta, mid.rho]]
        runs = [optimize.minimize(f, x0, method="Nelder-Mead",
                                  options=dict(maxiter=maxiter, xatol=1e-10, fatol=1e-14))
                for x0 in starts]
        res = min(runs, key=lambda r: r.fun)
        th, rh = map(float, res.x)
    obj = float(res.fun)
    if not np.isfinite(init) or obj > init:
        # never return something worse than the start
        if np.isfinite(init) and obj > init:
            th, rh, obj = params.theta, params.rho, init
    if not res.success:
        warnings.warn("rate matching hit the iteration cap; returning best point found", RuntimeWarning)
    out = LIFParams(E=E, v_reset=E + rh, v_thr=E + th, tau_ref=tr, v_bg=params.v_bg, nu0=params.nu0)
    return MatchResult(out, obj, float(init), bool(res.success), int(res.nit))


# ---------------------------------------------------------------------------


def quantize(X, mode="half"):
    """Round to float16 and back. Returns (array, number of saturated entries)."""
    X = np.asarray(X, dtype=float)
    if mode == "full":
        return X, 0
    if mode != "half":
        raise ValueError("mode must be 'half' or 'full'")
    lim = float(np.finfo(np.float16).max)
    over = np.abs(X) > lim
    n_sat = int(np.count_nonzero(over & np.isfinite(X)))
    with np.errstate(over="ignore"):
        return np.clip(X, -lim, lim).astype(np.float16).astype(float), n_sat


def quantize_state(S: StateMatrix, mode="half") -> StateMatrix:
    if mode == "full":
        return S
    Xq, n_sat = quantize(S.X, mode)
    return StateMatrix(Xq, S.dt, dict(S.meta, precision=mode, saturated=n_sat))
