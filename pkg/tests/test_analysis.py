import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from hetres.analysis import (MomentAccumulator, analyze, decorrelate_state, overlaps, participation_ratio,
                             pr_from_variances, task_state_overlap)
from hetres.errors import DegenerateStateError, UndefinedMeasureError


def orthonormal_rows(n, L, seed=0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((L, n)))
    Q -= Q.mean(axis=0)  # zero-mean columns so centring leaves the span alone
    Q, _ = np.linalg.qr(Q)
    return Q.T


class TestDecorrelate:
    def test_orthogonal_rows_recovered(self):
        R = orthonormal_rows(3, 400)
        X = np.diag([3.0, 2.0, 1.0]) @ R
        c = decorrelate_state(X)
        assert c.n == 3
        for i in range(3):
            assert abs(abs(c.U[i] @ R[i]) - 1) < 1e-10
        np.testing.assert_allclose(c.variances, [9, 4, 1], rtol=1e-10)

    def test_constructed_spectrum(self):
        R = orthonormal_rows(3, 1000, seed=1)
        X = np.array([[1, 0, 0], [0, 1, 0], [0.5, 0.5, 0.0], [0, 0, 0.01]]) @ (R * [[10], [8], [1]])
        c = decorrelate_state(X)
        assert c.n == 2 and c.captured >= 0.999

    def test_components_orthonormal(self):
        X = np.random.default_rng(2).standard_normal((20, 300))
        U = decorrelate_state(X).U
        G = U @ U.T
        np.testing.assert_allclose(G, np.eye(G.shape[0]), atol=1e-8)

    def test_sign_convention(self):
        X = np.random.default_rng(3).standard_normal((6, 200))
        a = decorrelate_state(X)
        b = decorrelate_state(X.copy())
        assert np.array_equal(a.U, b.U)

    def test_degenerate(self):
        with pytest.raises(DegenerateStateError):
            decorrelate_state(np.ones((3, 50)))


class TestOverlap:
    def test_in_and_out_of_span(self):
        R = orthonormal_rows(4, 500, seed=4)
        assert task_state_overlap(R[1], R[:2]) == pytest.approx(1.0, abs=1e-9)
        assert task_state_overlap(R[3], R[:2]) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("q", [0.0, 0.1, 0.37, 0.5, 0.9, 1.0])
    def test_energy_split(self, q):
        R = orthonormal_rows(5, 600, seed=5)
        y = np.sqrt(q) * R[0] + np.sqrt(1 - q) * R[4]
        assert abs(task_state_overlap(y, R[:3]) - q) < 1e-6

    def test_rotation_invariant(self):
        R = orthonormal_rows(5, 300, seed=6)
        y = np.random.default_rng(6).standard_normal(300)
        M = ortho_group.rvs(3, random_state=1)
        assert task_state_overlap(y, M @ R[:3]) == pytest.approx(task_state_overlap(y, R[:3]), abs=1e-12)

    def test_monotone_in_components(self):
        X = np.random.default_rng(7).standard_normal((10, 400))
        y = np.random.default_rng(8).standard_normal(400)
        U = decorrelate_state(X).U
        ov = [task_state_overlap(y, U[:n]) for n in range(1, U.shape[0] + 1)]
        assert np.all(np.diff(ov) >= -1e-12)

    def test_noise_neuron_does_not_reduce(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((8, 500))
        Y = np.vstack([X[0] + X[1], X[2] ** 2, rng.standard_normal(500)])
        base = overlaps(Y, decorrelate_state(X, 1.0))
        more = overlaps(Y, decorrelate_state(np.vstack([X, rng.standard_normal(500)]), 1.0))
        assert np.all(more >= base - 1e-9)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((6, 300))
        Y = rng.standard_normal((4, 300))
        c = decorrelate_state(X)
        ov = overlaps(Y, c)
        for j in range(4):
            assert ov[j] == pytest.approx(task_state_overlap(Y[j], c), abs=1e-12)

    def test_constant_target(self):
        with pytest.raises(UndefinedMeasureError):
            task_state_overlap(np.ones(10), np.eye(10)[:2])


class TestParticipationRatio:
    def test_isotropic(self):
        R = orthonormal_rows(5, 200, seed=11)
        assert participation_ratio(R) == pytest.approx(5.0, rel=1e-10)

    def test_rank_one(self):
        x = np.random.default_rng(12).standard_normal(100)
        assert participation_ratio(np.outer([1.0, 2.0, -1.0], x)) == pytest.approx(1.0, rel=1e-10)

    def test_two_one(self):
        # singular values (2, 1): variances (4, 1)
        assert abs(pr_from_variances([4.0, 1.0]) - 25 / 17) < 1e-12
        R = orthonormal_rows(2, 100, seed=13)
        assert abs(participation_ratio(np.diag([2.0, 1.0]) @ R) - 25 / 17) < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateStateError):
            participation_ratio(np.zeros((3, 10)))

    @given(N=st.integers(1, 8), L=st.integers(2, 40), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_bounds(self, N, L, seed):
        X = np.random.default_rng(seed).uniform(size=(N, L))
        d = participation_ratio(X)
        assert 1 - 1e-9 <= d <= min(N, L) + 1e-9


class TestMomentRoute:
    """The streaming moment route must agree with the in-memory SVD route."""

    def _data(self, seed=14):
        rng = np.random.default_rng(seed)
        t = np.arange(5000) * 0.01
        base = np.vstack([np.sin(t), np.cos(1.3 * t), np.sin(0.7 * t) ** 2])
        X = 1 / (1 + np.exp(-(rng.standard_normal((12, 3)) @ base + 0.1 * rng.standard_normal((12, t.size)))))
        Y = np.vstack([np.sin(t + 0.3), np.cos(1.3 * t) ** 3, rng.standard_normal(t.size)])
        return X, Y

    def test_agrees_with_svd(self):
        X, Y = self._data()
        ref = analyze(X, Y)
        acc = MomentAccumulator(X.shape[0], Y.shape[0])
        for a in range(0, X.shape[1], 777):
            acc.add(X[:, a:a + 777].T, Y[:, a:a + 777].T)
        rep = acc.report()
        assert rep.n_components == ref.n_components
        np.testing.assert_allclose(rep.overlap, ref.overlap, atol=1e-8)
        assert rep.d_pr == pytest.approx(ref.d_pr, rel=1e-9)
        assert rep.variance_captured == pytest.approx(ref.variance_captured, rel=1e-9)

    def test_report_bounds(self):
        X, Y = self._data(15)
        rep = analyze(X, Y)
        assert np.all(rep.overlap >= 0) and np.all(rep.overlap <= 1 + 1e-9)
        assert 1 <= rep.d_pr <= X.shape[0]
