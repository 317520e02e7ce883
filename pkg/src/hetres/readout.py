"""Train/test splits, closed-form ridge readouts and R^2 scoring.

State matrices here are feature-major, (N, n_samples), as in the network
state X(t). The intercept is a constant-one feature appended as the last row.
For long runs the Gram matrix is accumulated block by block
(:class:`GramAccumulator`) so the training states never need to be stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import seeds as _seeds
from .errors import AlignmentError, InsufficientDataError, UndefinedMeasureError

DEFAULT_LAMBDA = 1e-6
DEFAULT_WARMUP = 1000


@dataclass(frozen=True)
class SplitPlan:
    """Step layout: [warmup][train 1]...[train trials][test].

    Each region is its usable sample count plus a margin of 4*tau_u/dt steps;
    the usable samples are the central ones, margin/2 from either edge, so
    shifted targets up to 2*tau_u never read outside the region.
    """

    N: int
    dt: float = 0.01
    tau_y: float = 1.0
    tau_u: float = 1.0
    trials: int = 3
    warmup: int = DEFAULT_WARMUP
    train_factor: float = 20.0
    test_factor: float = 10.0

    @property
    def margin(self):
        return int(round(4 * self.tau_u / self.dt))

    @property
    def N_train(self):
        return int(round((self.N + 1) * self.train_factor * self.tau_y / self.dt))

    @property
    def N_test(self):
        return int(round(self.test_factor * self.tau_y / self.dt))

    @property
    def L_train(self):
        return self.N_train + self.margin

    @property
    def L_test(self):
        return self.N_test + self.margin

    @property
    def total_steps(self):
        return self.warmup + self.trials * self.L_train + self.L_test

    def train_region(self, trial):
        if not 0 <= trial < self.trials:
            raise IndexError("trial out of range")
        start = self.warmup + trial * self.L_train
        return start, start + self.L_train

    def test_region(self):
        start = self.warmup + self.trials * self.L_train
        return start, start + self.L_test

    def train_slice(self, trial):
        a, _ = self.train_region(trial)
        a += self.margin // 2
        return slice(a, a + self.N_train)

    def test_slice(self):
        a, _ = self.test_region()
        a += self.margin // 2
        return slice(a, a + self.N_test)

    def window(self):
        """Index range spanning every usable sample (first train to last test)."""
        return slice(self.train_slice(0).start, self.test_slice().stop)

    def check(self, available):
        if self.total_steps > available:
            raise InsufficientDataError(
                f"plan needs {self.total_steps} steps but only {available} are available")


def plan_splits(N, dt=0.01, tau_y=1.0, tau_u=1.0, trials=3, warmup=DEFAULT_WARMUP, **kw) -> SplitPlan:
    if N < 1:
        raise ValueError("N must be >= 1")
    return SplitPlan(int(N), float(dt), float(tau_y), float(tau_u), int(trials), int(warmup), **kw)


@dataclass
class Readout:
    beta: np.ndarray  # (N+1,) or (N+1, T); last row is the intercept
    lam: float
    task: object = None
    solver: str = "cholesky"

    @property
    def weights(self):
        return self.beta[:-1]

    @property
    def intercept(self):
        return self.beta[-1]

    def predict(self, X):
        """Prediction for (N, n) states, with or without the intercept row."""
        X = np.asarray(X, dtype=float)
        if X.shape[0] == self.beta.shape[0]:
            return self.beta.T @ X
        return self.beta[:-1].T @ X + (self.beta[-1][:, None] if self.beta.ndim == 2 else self.beta[-1])


@dataclass
class ScoreRecord:
    task: object
    scores: np.ndarray
    network_id: str = ""

    @property
    def mean(self):
        return float(np.mean(self.scores))

    @property
    def std(self):
        return float(np.std(self.scores, ddof=1)) if len(self.scores) > 1 else 0.0


def augment(X):
    """Append the constant-one intercept row to a (N, n) matrix."""
    X = np.asarray(X, dtype=float)
    return np.vstack([X, np.ones((1, X.shape[1]))])


def solve_gram(G, B, lam=DEFAULT_LAMBDA):
    """(G + lam I)^{-1} B via Cholesky, falling back to an eigendecomposition.

    Returns (beta, solver_tag).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    A = G + lam * np.eye(G.shape[0])
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=True)
        beta = linalg.cho_solve(c, B)
        if np.all(np.isfinite(beta)):
            return beta, "cholesky"
    except linalg.LinAlgError:
        pass
    w, V = linalg.eigh(0.5 * (G + G.T))
    w = np.maximum(w, 0.0) + lam
    beta = V @ ((V.T @ B) / (w[:, None] if np.ndim(B) == 2 else w))
    return beta, "eigh"


def fit_ridge(X_train, y_train, lam=DEFAULT_LAMBDA, task=None) -> Readout:
    """Closed-form ridge with intercept; X_train is (N, n), y_train (n,) or (T, n)."""
    Xa = augment(X_train)
    y = np.asarray(y_train, dtype=float)
    if Xa.shape[1] != y.shape[-1]:
        raise AlignmentError("states and targets have different sample counts")
    if Xa.shape[1] <= Xa.shape[0]:
        raise InsufficientDataError("need more samples than features")
    beta, tag = solve_gram(Xa @ Xa.T, Xa @ y.T, lam)
    return Readout(beta, lam, task, tag)


def r2(y, yhat):
    """1 - ||y - yhat||^2 / ||y - mean y||^2 along the last axis."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    den = np.sum((y - y.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    if np.any(den == 0):
        raise UndefinedMeasureError("constant test target: R^2 undefined")
    return 1.0 - np.sum((y - yhat) ** 2, axis=-1) / den


def score(readout: Readout, X_test, y_test):
    s = r2(y_test, readout.predict(X_test))
    return float(s) if np.ndim(s) == 0 else s


class GramAccumulator:
    """Running G = Xa Xa^T and B = Xa Y^T over time-major blocks."""

    def __init__(self, N, T):
        self.G = np.zeros((N + 1, N + 1))
        self.B = np.zeros((N + 1, T))
        self.n = 0

    def add(self, X_tm, Y_tm):
        """X_tm: (m, N) states, Y_tm: (m, T) targets, both time-major."""
        m = X_tm.shape[0]
        if Y_tm.shape[0] != m:
            raise AlignmentError("block length mismatch")
        Xa = np.empty((m, X_tm.shape[1] + 1))
        Xa[:, :-1] = X_tm
        Xa[:, -1] = 1.0
        self.G += Xa.T @ Xa
        self.B += Xa.T @ Y_tm
        self.n += m

    def solve(self, lam=DEFAULT_LAMBDA):
        return solve_gram(self.G, self.B, lam)


def build_dataset(X, Y, plan: SplitPlan, shuffle_seed=0, trial=0, permute=True):
    """Central train (given trial) and test samples, shuffled jointly.

    Returns ((X_train, Y_train), (X_test, Y_test)) with the intercept row
    appended to the state matrices; X is (N, L), Y is (T, L) or (L,).
    """
    X = getattr(X, "X", X)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[-1]:
        raise AlignmentError(f"state has {X.shape[1]} samples, targets {Y.shape[-1]}")
    plan.check(X.shape[1])
    tr, te = plan.train_slice(trial), plan.test_slice()
    rng = _seeds.stream(shuffle_seed, "readout/shuffle", trial)
    p_tr = rng.permutation(plan.N_train) if permute else np.arange(plan.N_train)
    p_te = rng.permutation(plan.N_test) if permute else np.arange(plan.N_test)
    idx_tr = np.arange(tr.start, tr.stop)[p_tr]
    idx_te = np.arange(te.start, te.stop)[p_te]
    return ((augment(X[:, idx_tr]), Y[..., idx_tr]), (augment(X[:, idx_te]), Y[..., idx_te]))


def multi_trial_score(X, Y, plan: SplitPlan, shuffle_seed=0, lam=DEFAULT_LAMBDA, tasks=None,
                      network_id=""):
    """Fit one readout per training region, score all on the common test set.

    Returns a list of ScoreRecord, one per target row.
    """
    X = getattr(X, "X", X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    scores = np.empty((plan.trials, Y.shape[0]))
    for t in range(plan.trials):
        (Xtr, Ytr), (Xte, Yte) = build_dataset(X, Y, plan, shuffle_seed, t)
        beta, _ = solve_gram(Xtr @ Xtr.T, Xtr @ Ytr.T, lam)
        scores[t] = r2(Yte, beta.T @ Xte)
    tasks = tasks if tasks is not None else [None] * Y.shape[0]
    return [ScoreRecord(tasks[j], scores[:, j], network_id) for j in range(Y.shape[0])]


def ci95(values):
    """Normal-approximation 95% half-width of the mean."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(1.959963984540054 * v.std(ddof=1) / math.sqrt(v.size))
