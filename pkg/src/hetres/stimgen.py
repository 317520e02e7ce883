"""Driving stimuli: chaotic/periodic generators, standardization and time rescaling.

Every generator returns a :class:`RawSeries` sampled on a uniform dense grid.
:func:`standardize_and_rescale` turns one or more raw series into a
:class:`Stimulus` whose components are z-scored and whose compound (geometric
mean) peak frequency is 1 Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import signal

from . import seeds as _seeds
from .errors import (
    InstabilityError,
    IntegrationError,
    InvalidDelayError,
    RescaleError,
    ZeroVarianceError,
)

LORENZ_X0 = (-1.96582031, -1.08886719, 2.17578125)
TRANSIENT_FRACTION = 0.1


@dataclass(frozen=True)
class RawSeries:
    values: np.ndarray  # (C, L)
    dt: float
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        if v.shape[1] < 2 or not self.dt > 0:
            raise ValueError("a raw series needs at least 2 samples and dt > 0")

    @property
    def dt_dense(self):
        return self.dt

    @property
    def n_components(self):
        return self.values.shape[0]

    @property
    def duration(self):
        return (self.values.shape[1] - 1) * self.dt


@dataclass(frozen=True)
class Stimulus:
    """K-dimensional input sampled every ``dt`` starting at t=0.

    ``compound_freq`` is the geometric mean of the component peak frequencies
    after rescaling (1 Hz when built by :func:`standardize_and_rescale`);
    ``time_scale`` is the factor that was applied to the raw time axis.
    """

    components: np.ndarray  # (K, L)
    dt: float
    compound_freq: float = 1.0
    time_scale: float = 1.0
    raw_peak_freqs: tuple = ()
    source: tuple = ()

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.components, dtype=float))
        object.__setattr__(self, "components", c)

    @property
    def dt_dense(self):
        return self.dt

    @property
    def K(self):
        return self.components.shape[0]

    @property
    def n_samples(self):
        return self.components.shape[1]

    @property
    def duration(self):
        return (self.n_samples - 1) * self.dt

    def sample(self, t, k):
        return sample(self, t, k)


# ---------------------------------------------------------------------------
# Lorenz: Dormand-Prince 5(4) with the standard 4th-order dense output


_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_DP_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def _lorenz_rhs(y, sigma, rho, beta, out):
    out[0] = sigma * (y[1] - y[0])
    out[1] = y[0] * (rho - y[2]) - y[1]
    out[2] = y[0] * y[1] - beta * y[2]


@njit(cache=True)
def _lorenz_dopri(x0, sigma, rho, beta, n_out, dt_out, rtol, atol, A, B, C, E, P, out):
    """Integrate and write the dense solution at t = i*dt_out into ``out``.

    Returns -1.0 on success, otherwise the time at which the state blew up.
    """
    y = x0.copy()
    K = np.zeros((7, 3))
    ytmp = np.empty(3)
    ynew = np.empty(3)
    f = np.empty(3)
    _lorenz_rhs(y, sigma, rho, beta, f)
    K[0, :] = f
    for j in range(3):
        out[j, 0] = y[j]
    t = 0.0
    t_end = (n_out - 1) * dt_out
    h = min(dt_out, 1e-3)
    th = np.empty(4)
    nxt = 1
    while nxt < n_out:
        if t + h > t_end:
            h = t_end - t
            if h <= 0.0:
                h = 1e-12
        for s in range(1, 6):
            for j in range(3):
                acc = 0.0
                for m in range(s):
                    acc += A[s, m] * K[m, j]
                ytmp[j] = y[j] + h * acc
            _lorenz_rhs(ytmp, sigma, rho, beta, f)
            K[s, :] = f
        for j in range(3):
            acc = 0.0
            for m in range(6):
                acc += B[m] * K[m, j]
            ynew[j] = y[j] + h * acc
        _lorenz_rhs(ynew, sigma, rho, beta, f)
        K[6, :] = f
        err = 0.0
        finite = True
        for j in range(3):
            if not np.isfinite(ynew[j]) or abs(ynew[j]) > 1e8:  # far outside any attractor
                finite = False
            e = 0.0
            for m in range(7):
                e += E[m] * K[m, j]
            e *= h
            sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
            err += (e / sc) ** 2
        if not finite or not np.isfinite(err):
            return t + h
        err = math.sqrt(err / 3.0)
        if err <= 1.0:
            t_new = t + h
            # dense output for every grid point inside (t, t_new]
            while nxt < n_out and nxt * dt_out <= t_new + 1e-12 * dt_out:
                theta = (nxt * dt_out - t) / h
                th[0] = theta
                th[1] = theta * theta
                th[2] = th[1] * theta
                th[3] = th[2] * theta
                for j in range(3):
                    acc = 0.0
                    for m in range(7):
                        q = 0.0
                        for p in range(4):
                            q += P[m, p] * th[p]
                        acc += K[m, j] * q
                    out[j, nxt] = y[j] + h * acc
                nxt += 1
            t = t_new
            for j in range(3):
                y[j] = ynew[j]
            K[0, :] = K[6, :]
            fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < 1e-14 * max(1.0, abs(t)):
            return t  # step size collapsed: treat as blow-up
    return -1.0


def gen_lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0, x0=LORENZ_X0, duration=100.0,
               dt_dense=1e-3, rtol=1e-8, atol=1e-10) -> RawSeries:
    """Lorenz trajectory from an adaptive RK45 (Dormand-Prince) integration."""
    if not (duration > 0 and dt_dense > 0):
        raise ValueError("duration and dt_dense must be positive")
    n_out = int(math.floor(duration / dt_dense + 1e-9)) + 1
    out = np.empty((3, n_out))
    blowup = _lorenz_dopri(np.asarray(x0, dtype=float), float(sigma), float(rho), float(beta),
                           n_out, float(dt_dense), float(rtol), float(atol),
                           _DP_A, _DP_B, _DP_C, _DP_E, _DP_P, out)
    if blowup >= 0:
        raise IntegrationError(f"Lorenz integration blew up at t={blowup:.6g}", time=blowup)
    src = dict(generator="lorenz", sigma=sigma, rho=rho, beta=beta, x0=list(map(float, x0)),
               duration=duration, dt_dense=dt_dense, rtol=rtol, atol=atol)
    return RawSeries(out, dt_dense, src)


# ---------------------------------------------------------------------------
# Mackey-Glass: RK4 on the dense grid, delayed term by linear interpolation


@njit(cache=True)
def _delayed(x, m_hist, h, s):
    # x[m_hist] holds t=0; s is the (past) time to read
    pos = s / h + m_hist
    i = int(math.floor(pos))
    if i < 0:
        i = 0
        pos = 0.0
    if i >= x.shape[0] - 1:
        return x[x.shape[0] - 1]
    fr = pos - i
    return x[i] + fr * (x[i + 1] - x[i])


@njit(cache=True)
def _mg_rhs(xd, x, a, b, n_exp):
    return a * xd / (1.0 + xd ** n_exp) - b * x


@njit(cache=True)
def _mackey_glass_rk4(x, m_hist, n_steps, h, a, b, n_exp, delta):
    for i in range(n_steps):
        t = i * h
        xi = x[m_hist + i]
        d0 = _delayed(x, m_hist, h, t - delta)
        d1 = _delayed(x, m_hist, h, t - delta + 0.5 * h)
        d2 = _delayed(x, m_hist, h, t - delta + h)
        k1 = _mg_rhs(d0, xi, a, b, n_exp)
        k2 = _mg_rhs(d1, xi + 0.5 * h * k1, a, b, n_exp)
        k3 = _mg_rhs(d1, xi + 0.5 * h * k2, a, b, n_exp)
        k4 = _mg_rhs(d2, xi + h * k3, a, b, n_exp)
        xn = xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(xn):
            return t + h
        x[m_hist + i + 1] = xn
    return -1.0


def mackey_glass_history(delta, dt_dense, history_seed, low=1.1, high=1.3):
    """Random history at the grid points -M*dt, ..., -dt (oldest first)."""
    m = int(math.ceil(delta / dt_dense - 1e-9))
    rng = np.random.default_rng(history_seed)
    return rng.uniform(low, high, m)


def gen_mackey_glass(a=0.2, b=0.1, n_exp=10.0, delta=17.0, duration=500.0, dt_dense=0.01,
                     history_seed=0, x0=1.2, history=None) -> RawSeries:
    """Mackey-Glass delay equation integrated with RK4 on the dense grid.

    ``history`` overrides the random history; it must hold the values at
    ``-M*dt_dense, ..., -dt_dense`` with ``M = ceil(delta/dt_dense)``.
    """
    if delta < dt_dense:
        raise InvalidDelayError(f"delay {delta} is shorter than the grid step {dt_dense}")
    if duration <= 0:
        raise ValueError("duration must be positive")
    m = int(math.ceil(delta / dt_dense - 1e-9))
    if history is None:
        history = mackey_glass_history(delta, dt_dense, history_seed)
    history = np.asarray(history, dtype=float)
    if history.shape != (m,):
        raise ValueError(f"history must have {m} samples, got {history.shape}")
    n_steps = int(math.floor(duration / dt_dense + 1e-9))
    x = np.empty(m + n_steps + 1)
    x[:m] = history
    x[m] = x0
    blowup = _mackey_glass_rk4(x, m, n_steps, float(dt_dense), float(a), float(b),
                               float(n_exp), float(delta))
    if blowup >= 0:
        raise IntegrationError(f"Mackey-Glass integration blew up at t={blowup:.6g}", time=blowup)
    src = dict(generator="mackey_glass", a=a, b=b, n_exp=n_exp, delta=delta,
               duration=duration, dt_dense=dt_dense, history_seed=history_seed, x0=x0)
    return RawSeries(x[m:], dt_dense, src)


# ---------------------------------------------------------------------------
# NARMA


@njit(cache=True)
def _narma(u, xi, order, a1, a2, b, c):
    for t in range(u.shape[0] - 1):
        acc = 0.0
        for i in range(order):
            if t - i >= 0:
                acc += u[t - i]
        xi_lag = xi[t - (order - 1)] if t - (order - 1) >= 0 else 0.0
        nxt = a1 * u[t] + a2 * u[t] * acc + b * xi_lag * xi[t] + c
        if not abs(nxt) <= 1e6:
            return t + 1
        u[t + 1] = nxt
    return -1


def gen_narma(order=30, a1=0.2, a2=0.04, b=1.5, c=0.001, length=10000, noise_seed=0,
              dt_dense=0.01, xi=None) -> RawSeries:
    """NARMA recursion driven by xi ~ U[0, 0.5] from zero initial conditions."""
    if order < 1 or length <= order:
        raise ValueError("need order >= 1 and length > order")
    if xi is None:
        xi = np.random.default_rng(noise_seed).uniform(0.0, 0.5, length)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] < length:
        raise ValueError("xi stream shorter than the requested length")
    u = np.zeros(length)
    bad = _narma(u, xi, int(order), float(a1), float(a2), float(b), float(c))
    if bad >= 0:
        raise InstabilityError(f"NARMA diverged at step {bad}")
    src = dict(generator="narma", order=order, a1=a1, a2=a2, b=b, c=c, length=length,
               noise_seed=noise_seed, dt_dense=dt_dense)
    return RawSeries(u, dt_dense, src)


def gen_abs_sine(duration=100.0, dt_dense=1e-3) -> RawSeries:
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(math.floor(duration / dt_dense + 1e-9)) + 1
    t = np.arange(n) * dt_dense
    return RawSeries(np.abs(np.sin(t)), dt_dense,
                     dict(generator="abs_sine", duration=duration, dt_dense=dt_dense))


# ---------------------------------------------------------------------------


WELCH_SEGMENTS = 16


def peak_frequency(x, dt, transient=TRANSIENT_FRACTION, segments=WELCH_SEGMENTS):
    """Dominant frequency (Hz) of a series and the spectral bin width.

    The spectrum is a Hann-windowed Welch estimate over the post-transient
    samples (``segments`` non-overlapping lengths, 50% overlap); the dominant
    frequency maximizes f*S(f), the power per unit log-frequency. Red spectra
    such as the Lorenz x/y components have no interior maximum of S(f) itself.
    """
    x = np.asarray(x, dtype=float)
    x = x[int(len(x) * transient):]
    nper = max(8, len(x) // segments)
    freqs, power = signal.welch(x, fs=1.0 / dt, window="hann", nperseg=nper)
    return float(freqs[np.argmax(freqs * power)]), float(freqs[1] - freqs[0])


def standardize_and_rescale(*raws: RawSeries, transient=TRANSIENT_FRACTION) -> Stimulus:
    """Concatenate components, z-score each, and stretch time to a 1 Hz compound frequency."""
    if len(raws) == 1 and isinstance(raws[0], (list, tuple)):
        raws = tuple(raws[0])
    dts = {r.dt for r in raws}
    lens = {r.values.shape[1] for r in raws}
    if len(dts) != 1 or len(lens) != 1:
        raise ValueError("raw series must share the dense grid (same dt and length)")
    dt = raws[0].dt
    comps = np.concatenate([r.values for r in raws], axis=0)
    out = np.empty_like(comps)
    peaks = []
    for i, row in enumerate(comps):
        sd = row.std()
        if not sd > 1e-12 * max(1.0, np.abs(row).max()):
            raise ZeroVarianceError(f"component {i} is constant")
        z = (row - row.mean()) / sd
        # second pass removes the residual rounding in mean/variance
        z -= z.mean()
        z /= z.std()
        out[i] = z
        f, _ = peak_frequency(z, dt, transient)
        if f <= 0:
            raise RescaleError(f"component {i} has its spectral peak at 0 Hz")
        peaks.append(f)
    fc = float(np.exp(np.mean(np.log(peaks))))
    return Stimulus(out, dt * fc, compound_freq=1.0, time_scale=fc,
                    raw_peak_freqs=tuple(peaks), source=tuple(r.source for r in raws))


def compound_frequency(stim: Stimulus, transient=TRANSIENT_FRACTION):
    peaks = [peak_frequency(c, stim.dt, transient)[0] for c in stim.components]
    return float(np.exp(np.mean(np.log(peaks))))


def sample(stim: Stimulus, t, k):
    """Linear interpolation of component ``k`` (0-based) at times ``t``; clamps outside."""
    v = stim.components[k]
    t = np.asarray(t, dtype=float)
    pos = np.clip(t / stim.dt, 0.0, v.shape[0] - 1)
    i = np.minimum(np.floor(pos).astype(np.int64), v.shape[0] - 2)
    fr = pos - i
    res = v[i] + fr * (v[i + 1] - v[i])
    return res if res.ndim else float(res)


def sample_all(stim: Stimulus, t):
    """All components at times ``t``: array of shape (K, len(t))."""
    t = np.asarray(t, dtype=float)
    pos = np.clip(t / stim.dt, 0.0, stim.n_samples - 1)
    i = np.minimum(np.floor(pos).astype(np.int64), stim.n_samples - 2)
    fr = pos - i
    c = stim.components
    return c[:, i] + fr * (c[:, i + 1] - c[:, i])


# ---------------------------------------------------------------------------
# Convenience constructors used by the harness


def _raw_for(kind, duration, dt_raw, params, seed):
    p = dict(params or {})
    if kind == "lorenz":
        return [gen_lorenz(duration=duration, dt_dense=dt_raw, **p)]
    if kind == "mackey_glass":
        deltas = p.pop("deltas", (10.0, 50.0, 80.0))
        return [gen_mackey_glass(delta=d, duration=duration, dt_dense=dt_raw,
                                 history_seed=_seeds.int_seed(seed, "stimgen/mackey_glass", i), **p)
                for i, d in enumerate(deltas)]
    if kind == "narma":
        n = int(math.floor(duration / dt_raw + 1e-9)) + 1
        return [gen_narma(length=n, noise_seed=_seeds.int_seed(seed, "stimgen/narma"), dt_dense=dt_raw, **p)]
    if kind == "abs_sine":
        return [gen_abs_sine(duration=duration, dt_dense=dt_raw)]
    raise ValueError(f"unknown stimulus kind {kind!r}")


_PILOT = {"lorenz": (400.0, 2e-3), "mackey_glass": (6000.0, 0.05),
          "narma": (4000.0, 1.0), "abs_sine": (200.0, 1e-3)}


def synthesize(kind="lorenz", duration=100.0, dt_sim=0.01, seed=0, params=None,
               oversample=10, pad=1.05) -> Stimulus:
    """Build a standardized stimulus covering at least ``duration`` (rescaled time units).

    A short pilot run estimates the compound frequency so the raw grid can be
    chosen to land near ``dt_sim / oversample`` after rescaling.
    """
    if kind == "narma":
        # discrete series: one sample per dense step, frequency known only after the fact
        pilot = standardize_and_rescale(_raw_for(kind, _PILOT[kind][0], 1.0, params, seed))
        fc = pilot.time_scale
    else:
        pd, pdt = _PILOT[kind]
        fc = standardize_and_rescale(_raw_for(kind, pd, pdt, params, seed)).time_scale
    dt_raw = dt_sim / oversample / fc
    raw_duration = duration * pad / fc + 10 * dt_raw
    stim = standardize_and_rescale(_raw_for(kind, raw_duration, dt_raw, params, seed))
    if stim.duration < duration:
        # pilot overestimated the compound frequency; extend once
        raw_duration *= 1.05 * duration / stim.duration
        stim = standardize_and_rescale(_raw_for(kind, raw_duration, dt_raw, params, seed))
    return stim
