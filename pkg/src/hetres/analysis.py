"""Task-state overlap and participation ratio.

Two routes are provided: SVD on an in-memory state matrix, and a moment route
(covariance eigendecomposition plus state-target cross-covariances) for states
that were only ever seen in streamed blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, UndefinedMeasureError

VARIANCE_TARGET = 0.999


@dataclass
class Components:
    """Orthonormal principal directions in sample space, (n_comp, L), plus spectrum."""

    U: np.ndarray
    variances: np.ndarray  # retained squared singular values
    total_variance: float

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def captured(self):
        return float(self.variances.sum() / self.total_variance)


@dataclass
class AlignmentReport:
    overlap: np.ndarray
    d_pr: float
    n_components: int
    variance_captured: float


def _retained(var, target):
    frac = np.cumsum(var) / var.sum()
    return int(min(len(var), np.searchsorted(frac, target - 1e-12) + 1))


def decorrelate_state(X, variance_target=VARIANCE_TARGET) -> Components:
    """Principal component time courses of the centred state X (N, L).

    Keeps the fewest components whose cumulative variance reaches the target.
    Each component is scaled to unit norm; its sign makes the largest-magnitude
    neuron loading positive.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    Xc = X - X.mean(axis=1, keepdims=True)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    var = s ** 2
    if var.sum() <= 0 or not np.isfinite(var.sum()):
        raise DegenerateStateError("state has no variance")
    n = _retained(var, variance_target)
    sign = np.sign(U[np.argmax(np.abs(U[:, :n]), axis=0), np.arange(n)])
    sign[sign == 0] = 1
    return Components(Vt[:n] * sign[:, None], var[:n], float(var.sum()))


def task_state_overlap(y, components) -> float:
    """Sum of squared cosines between the centred target and each component.

    ``components`` is a Components or any (n, L) matrix whose rows span the
    subspace; rows are orthonormalized first, so the result depends only on
    the span.
    """
    U = components.U if isinstance(components, Components) else np.atleast_2d(components)
    y = np.asarray(y, dtype=float)
    yc = y - y.mean()
    ny = np.linalg.norm(yc)
    if ny == 0:
        raise UndefinedMeasureError("constant target has no overlap")
    Q, _ = np.linalg.qr(U.T)
    c = Q.T @ (yc / ny)
    return float(np.dot(c, c))


def overlaps(Y, components):
    U = components.U if isinstance(components, Components) else np.atleast_2d(components)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Yc = Y - Y.mean(axis=1, keepdims=True)
    ny = np.linalg.norm(Yc, axis=1)
    if np.any(ny == 0):
        raise UndefinedMeasureError("constant target has no overlap")
    Q, _ = np.linalg.qr(U.T)
    C = (Yc / ny[:, None]) @ Q
    return np.sum(C ** 2, axis=1)


def participation_ratio(X) -> float:
    """(sum s^2)^2 / sum s^4 over singular values of the centred state."""
    X = np.asarray(getattr(X, "X", X), dtype=float)
    s2 = np.linalg.svd(X - X.mean(axis=1, keepdims=True), compute_uv=False) ** 2
    return pr_from_variances(s2)


def pr_from_variances(var):
    var = np.asarray(var, dtype=float)
    var = var[var > 0]
    if var.size == 0:
        raise DegenerateStateError("state has no variance")
    return float(var.sum() ** 2 / np.sum(var ** 2))


def analyze(X, Y, variance_target=VARIANCE_TARGET) -> AlignmentReport:
    comp = decorrelate_state(X, variance_target)
    return AlignmentReport(overlaps(Y, comp), participation_ratio(X), comp.n, comp.captured)


class MomentAccumulator:
    """Streaming sums for covariance-based overlap and participation ratio."""

    def __init__(self, N, T):
        self.n = 0
        self.sx = np.zeros(N)
        self.sy = np.zeros(T)
        self.sxx = np.zeros((N, N))
        self.sxy = np.zeros((N, T))
        self.syy = np.zeros(T)

    def add(self, X_tm, Y_tm):
        self.n += X_tm.shape[0]
        self.sx += X_tm.sum(axis=0)
        self.sy += Y_tm.sum(axis=0)
        self.sxx += X_tm.T @ X_tm
        self.sxy += X_tm.T @ Y_tm
        self.syy += np.einsum("ij,ij->j", Y_tm, Y_tm)

    def report(self, variance_target=VARIANCE_TARGET) -> AlignmentReport:
        n = self.n
        mx, my = self.sx / n, self.sy / n
        Cxx = self.sxx - n * np.outer(mx, mx)
        Cxy = self.sxy - n * np.outer(mx, my)
        vy = self.syy - n * my ** 2
        if np.any(vy <= 0):
            raise UndefinedMeasureError("constant target has no overlap")
        w, E = np.linalg.eigh(0.5 * (Cxx + Cxx.T))
        w, E = w[::-1], E[:, ::-1]
        w = np.maximum(w, 0.0)
        if w.sum() <= 0:
            raise DegenerateStateError("state has no variance")
        k = _retained(w, variance_target)
        proj = E[:, :k].T @ Cxy  # (k, T)
        ov = np.sum(proj ** 2 / w[:k, None], axis=0) / vy
        return AlignmentReport(ov, pr_from_variances(w), k, float(w[:k].sum() / w.sum()))
