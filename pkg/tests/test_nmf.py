import numpy as np
import pytest

from bcnmf.kernels import KernelSpec, gram
from bcnmf.nmf import (
    NmfOptions,
    _convex_run,
    _factor,
    _init,
    _seeds,
    cnmf,
    cnmf_fixed_w,
    feature_space_error,
    knmf,
    nmf,
    partition,
    reconstruction_error,
)
from conftest import same_partition, two_clouds


def assert_monotone(trace):
    t = np.asarray(trace)
    assert np.all(t[1:] <= t[:-1] * (1 + 1e-9))


def brute_error(X, W, H):
    n, d = X.shape
    k = W.shape[1]
    total = 0.0
    for f in range(d):
        for j in range(n):
            approx = 0.0
            for i in range(n):
                for c in range(k):
                    approx += X[i, f] * W[i, c] * H[j, c]
            total += (X[j, f] - approx) ** 2
    return total


class TestReconstructionError:
    def test_zero_factors(self, rng):
        X = rng.normal(size=(4, 3))
        z = np.zeros((4, 2))
        assert reconstruction_error(X, z, z) == pytest.approx(np.sum(X**2), rel=1e-14)

    def test_exact_factorization(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert reconstruction_error(X, np.eye(2), np.eye(2)) == 0.0

    def test_brute_force_4x4(self, rng):
        X = rng.normal(size=(4, 4))
        W, H = rng.random((4, 2)), rng.random((4, 2))
        assert reconstruction_error(X, W, H) == pytest.approx(brute_error(X, W, H), rel=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            reconstruction_error(rng.normal(size=(4, 2)), np.ones((3, 2)), np.ones((4, 2)))

    def test_feature_space_error_is_linear_kernel_error(self, rng):
        X = rng.normal(size=(6, 3))
        W, H = rng.random((6, 2)), rng.random((6, 2))
        got = feature_space_error(X @ X.T, W, H)
        assert got == pytest.approx(reconstruction_error(X, W, H), rel=1e-10)


class TestNMF:
    def test_rank_one(self, rng):
        u, v = rng.random(7) + 0.1, rng.random(4) + 0.1
        X = np.outer(u, v)
        res = nmf(X, NmfOptions(k=1, seed=3))
        assert res.objective / np.sum(X**2) <= 1e-6
        assert_monotone(res.objective_trace)

    def test_zero_matrix(self):
        res = nmf(np.zeros((4, 3)), NmfOptions(k=2))
        assert res.objective == 0.0

    @pytest.mark.parametrize("n", [3, 5, 8])
    def test_identity_k_equals_n(self, n):
        res = nmf(np.eye(n), NmfOptions(k=n, seed=0))
        assert res.objective / n <= 1e-3

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="cnmf"):
            nmf(np.array([[1.0, -1.0]]), NmfOptions(k=1))

    def test_shapes(self, rng):
        res = nmf(rng.random((9, 4)), NmfOptions(k=2))
        assert res.W.shape == (4, 2) and res.H.shape == (9, 2)
        assert np.all(res.W >= 0) and np.all(res.H >= 0)


class TestConvexNMF:
    def test_two_clouds(self):
        X, y = two_clouds()
        res = cnmf(X, NmfOptions(k=2, seed=1))
        assert same_partition(res.labels, y)

    def test_zero_data(self):
        res = cnmf(np.zeros((5, 2)), NmfOptions(k=2))
        assert res.objective == 0.0

    def test_monotone_and_nonnegative(self, rng):
        X = rng.normal(size=(15, 4))
        res = cnmf(X, NmfOptions(k=3, max_iters=300, seed=2))
        assert_monotone(res.objective_trace)
        assert np.all(res.W >= 0) and np.all(res.H >= 0)
        assert res.objective == pytest.approx(reconstruction_error(X, res.W, res.H), rel=1e-12)

    def test_k_larger_than_n(self, rng):
        with pytest.raises(ValueError):
            cnmf(rng.normal(size=(3, 2)), NmfOptions(k=4))

    def test_deterministic(self, rng):
        X = rng.normal(size=(12, 3))
        a = cnmf(X, NmfOptions(k=3, seed=9))
        b = cnmf(X, NmfOptions(k=3, seed=9))
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.H, b.H)
        assert a.objective_trace == b.objective_trace

    def test_restart_selection_is_minimal(self, rng):
        X = rng.normal(size=(10, 3))
        opts = NmfOptions(k=2, seed=4, restarts=5, max_iters=30)
        best = cnmf(X, opts)
        finals = []
        A = X @ X.T
        for g in _seeds(opts):
            W0, H0 = _init(g, (10, 2)), _init(g, (10, 2))
            finals.append(_convex_run(0.5 * (A + A.T), X, W0, H0, opts)[2][-1])
        assert best.objective == min(finals)
        assert best.restart == int(np.argmin(finals))


class TestKernelNMF:
    @pytest.mark.parametrize("n", [3, 6])
    def test_identity(self, n):
        res = knmf(np.eye(n), NmfOptions(k=n))
        assert reconstruction_error(np.eye(n), res.W, res.H) / n <= 1e-3

    def test_gaussian_two_clouds(self):
        X, y = two_clouds(seed=2)
        res = knmf(gram(X, KernelSpec.gaussian(2.0)), NmfOptions(k=2, seed=0))
        assert same_partition(res.labels, y)

    @pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
    def test_scale_invariant_partition(self, c):
        X, _ = two_clouds(seed=3)
        K = gram(X, KernelSpec.gaussian(3.0))
        opts = NmfOptions(k=2, seed=5)
        np.testing.assert_array_equal(knmf(c * K, opts).labels, knmf(K, opts).labels)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            knmf(np.array([[1.0, 0.5], [0.0, 1.0]]), NmfOptions(k=1))

    def test_traces_feature_space_objective(self, rng):
        X = rng.normal(size=(8, 3))
        K = gram(X, KernelSpec.gaussian(1.0))
        res = knmf(K, NmfOptions(k=2, max_iters=50))
        assert res.objective == pytest.approx(feature_space_error(K, res.W, res.H), rel=1e-9)
        L = _factor(K)
        np.testing.assert_allclose(L @ L.T, K, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_agrees_with_cnmf_on_linear_kernel(self, seed):
        X, y = two_clouds(seed=seed, per=int(4 + seed % 3))
        opts = NmfOptions(k=2, seed=seed)
        a = cnmf(X, opts).labels
        b = knmf(gram(X, KernelSpec.linear()), opts).labels
        np.testing.assert_array_equal(a, b)
        # brute force: the separable split is the only 2-partition with zero cross-cloud mixing
        assert same_partition(a, y)


class TestFixedWeights:
    def test_close_to_full_run(self, rng):
        X, _ = two_clouds(seed=4, per=8)
        opts = NmfOptions(k=2, seed=1, max_iters=500)
        full = cnmf(X, opts)
        fixed = cnmf_fixed_w(X, full.W, opts)
        assert fixed.objective <= 1.05 * full.objective
        assert_monotone(fixed.objective_trace)

    def test_warm_start_cannot_worsen(self, rng):
        X = rng.normal(size=(14, 3))
        opts = NmfOptions(k=3, seed=2)
        full = cnmf(X, opts)
        again = cnmf_fixed_w(X, full.W, opts, H_init=full.H)
        assert again.objective <= full.objective + 1e-9
        np.testing.assert_array_equal(again.W, full.W)

    def test_zero_data(self):
        res = cnmf_fixed_w(np.zeros((4, 2)), np.ones((4, 2)), NmfOptions(k=2))
        assert res.objective == 0.0

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            cnmf_fixed_w(rng.normal(size=(5, 2)), np.ones((4, 2)), NmfOptions(k=2))

    def test_negative_weights(self, rng):
        with pytest.raises(ValueError):
            cnmf_fixed_w(rng.normal(size=(3, 2)), -np.ones((3, 2)), NmfOptions(k=2))

    def test_rescaled_weights_give_same_partition(self, rng):
        X = rng.normal(size=(20, 4))
        W = rng.random((20, 3))
        opts = NmfOptions(k=3, seed=8)
        a = cnmf_fixed_w(X, W, opts)
        b = cnmf_fixed_w(X, 2.0 * W, opts)
        np.testing.assert_array_equal(partition(a.H), partition(b.H))
        np.testing.assert_allclose(b.H, a.H / 2.0, rtol=1e-9)
