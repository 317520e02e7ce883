"""The task family y = u_k(t + delta)^d, its complexity, similarity and tiers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMeasureError
from .stimgen import Stimulus, sample

TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class TaskSpec:
    k: int  # 1-based component index
    delta: float
    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("exponent d must be a positive integer")
        if self.k < 1:
            raise ValueError("k is 1-based")

    @property
    def is_identity(self):
        return self.delta == 0 and self.d == 1


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple
    k_set: tuple
    d_set: tuple
    delta_count: int
    delta_range: tuple = (-2.0, 2.0)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    def table(self):
        return np.array([(t.k, t.delta, t.d) for t in self.tasks], dtype=float).reshape(-1, 3)


def generate_task_grid(k_set=(1, 2, 3), d_set=(1, 2, 3, 4, 5, 6), delta_count=49,
                       delta_range=(-2.0, 2.0)) -> TaskSet:
    """Cartesian product k x d x linspace(delta_range, delta_count), in that nesting order."""
    if delta_count < 1:
        raise ValueError("delta_count must be >= 1")
    deltas = np.linspace(delta_range[0], delta_range[1], delta_count)
    if delta_count % 2 == 1:
        deltas[delta_count // 2] = 0.5 * (delta_range[0] + delta_range[1])  # exact 0 at centre
    tasks = tuple(TaskSpec(int(k), float(dl), int(d)) for k in k_set for d in d_set for dl in deltas)
    return TaskSet(tasks, tuple(k_set), tuple(d_set), int(delta_count), tuple(delta_range))


def reduced_grid():
    """The desk-scale grid: k in {1,2}, d in {1,2,3}, 21 shifts (126 tasks)."""
    return generate_task_grid((1, 2), (1, 2, 3), 21)


def eval_task(spec: TaskSpec, stim: Stimulus, times):
    if spec.k > stim.K:
        raise IndexError(f"task component k={spec.k} but stimulus has K={stim.K}")
    u = sample(stim, np.asarray(times, dtype=float) + spec.delta, spec.k - 1)
    return u ** spec.d


def eval_tasks(tasks, stim: Stimulus, times):
    """Target matrix (n_tasks, len(times)); shifted components are sampled once."""
    times = np.asarray(times, dtype=float)
    cache = {}
    Y = np.empty((len(tasks), times.size))
    for j, t in enumerate(tasks):
        if t.k > stim.K:
            raise IndexError(f"task component k={t.k} but stimulus has K={stim.K}")
        key = (t.k, t.delta)
        if key not in cache:
            cache[key] = sample(stim, times + t.delta, t.k - 1)
        Y[j] = cache[key] ** t.d
    return Y


def _cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedMeasureError("zero-norm series")
    return float(np.dot(a, b) / (na * nb))


def complexity_of(y, y0):
    """1 - |cos(y, y0)| (uncentred)."""
    if np.array_equal(y, y0):
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - abs(_cosine(y, y0)))))


def complexity(spec: TaskSpec, stim: Stimulus, times):
    if spec.is_identity:
        eval_task(spec, stim, times)  # still validates k
        return 0.0
    y = eval_task(spec, stim, times)
    y0 = eval_task(TaskSpec(spec.k, 0.0, 1), stim, times)
    return complexity_of(y, y0)


def complexities(tasks, stim: Stimulus, times):
    Y = eval_tasks(tasks, stim, times)
    out = np.empty(len(tasks))
    refs = {}
    for j, t in enumerate(tasks):
        if t.k not in refs:
            refs[t.k] = sample(stim, np.asarray(times, float), t.k - 1)
        out[j] = 0.0 if t.is_identity else complexity_of(Y[j], refs[t.k])
    return out


def similarity(a, b):
    """Cosine between mean-subtracted series."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        return _cosine(a - a.mean(), b - b.mean())
    except UndefinedMeasureError:
        raise UndefinedMeasureError("constant series has no similarity") from None


def similarity_matrix(Y):
    Yc = Y - Y.mean(axis=1, keepdims=True)
    nrm = np.linalg.norm(Yc, axis=1)
    if np.any(nrm == 0):
        raise UndefinedMeasureError("constant target row")
    Yc /= nrm[:, None]
    S = Yc @ Yc.T
    return np.clip(0.5 * (S + S.T), -1.0, 1.0)


def complexity_tier(C):
    """'easy' on [0, 1/3), 'medium' on [1/3, 2/3), 'hard' on [2/3, 1]."""
    if C < 1 / 3:
        return "easy"
    if C < 2 / 3:
        return "medium"
    return "hard"
