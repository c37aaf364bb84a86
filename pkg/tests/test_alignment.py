import itertools

import numpy as np
import pytest

from bcnmf.alignment import (
    AlignmentProblem,
    build_qp,
    combine,
    kkt_residual,
    qp_objective,
    solve_qp,
    thin,
)
from bcnmf.kernels import FamilyGrid, KernelFamily, KernelSpec, base_family, frobenius_inner, gram, kta


def active_set_bruteforce(problem):
    """Enumerate every free set, solve its KKT system exactly, keep the best feasible point."""
    k = problem.size
    Q = problem.Kmat + problem.lam * np.eye(k)
    best_val, best = 0.0, np.zeros(k)
    for r in range(1, k + 1):
        for S in itertools.combinations(range(k), r):
            S = list(S)
            a = np.zeros(k)
            try:
                a[S] = np.linalg.solve(Q[np.ix_(S, S)], problem.f[S] / 2.0)
            except np.linalg.LinAlgError:
                continue
            if np.all(a >= 0):
                val = -a @ Q @ a + problem.f @ a
                if val > best_val:
                    best_val, best = val, a
    return best_val, best


def random_problem(rng, k):
    B = rng.normal(size=(k, k + 2))
    return AlignmentProblem(B @ B.T, rng.normal(size=k) * rng.uniform(0.1, 10), float(rng.uniform(0, 0.1)))


def family_of(*grams):
    return KernelFamily([KernelSpec.linear()] * len(grams), [np.asarray(g, float) for g in grams])


class TestBuildQP:
    def test_self_alignment(self, rng):
        X = rng.normal(size=(5, 2))
        K = gram(X, KernelSpec.gaussian(1.0))
        p = build_qp(K, family_of(K), lam=0.0)
        ss = frobenius_inner(K, K)
        np.testing.assert_allclose(p.Kmat, [[ss]], rtol=1e-14)
        np.testing.assert_allclose(p.f, [ss], rtol=1e-14)

    def test_disjoint_supports_are_orthogonal(self):
        A = np.zeros((3, 3))
        A[0, 0] = A[1, 1] = 1.0
        B = np.zeros((3, 3))
        B[2, 2] = 1.0
        B[0, 1] = B[1, 0] = 1.0
        p = build_qp(np.eye(3), family_of(A, B), lam=0.0)
        assert p.Kmat[0, 1] == 0.0 and p.Kmat[1, 0] == 0.0
        assert p.Kmat[0, 0] == 2.0 and p.Kmat[1, 1] == 3.0

    def test_zero_source_permitted(self, rng):
        fam = base_family(rng.normal(size=(4, 2)), FamilyGrid(gaussian_exponents=(0, 1), poly_degrees=()))
        p = build_qp(np.zeros((4, 4)), fam)
        np.testing.assert_array_equal(p.f, 0.0)

    def test_symmetric_psd(self, rng):
        fam = base_family(rng.normal(size=(6, 3)))
        p = build_qp(gram(rng.normal(size=(6, 2)), KernelSpec.linear()), fam)
        np.testing.assert_array_equal(p.Kmat, p.Kmat.T)
        vals = np.linalg.eigvalsh(p.Kmat)
        assert vals[0] >= -1e-8 * vals[-1]
        assert np.all(fam.grams[0] >= 0)

    def test_default_ridge(self, rng):
        fam = base_family(rng.normal(size=(4, 2)))
        p = build_qp(np.eye(4), fam)
        assert p.lam == pytest.approx(1e-6 * np.mean(np.diag(p.Kmat)))

    def test_dimension_mismatch(self, rng):
        fam = base_family(rng.normal(size=(4, 2)))
        with pytest.raises(ValueError):
            build_qp(np.eye(5), fam)


class TestSolveQP:
    @pytest.mark.parametrize("K,f,lam", [(2.0, 3.0, 0.1), (1.0, -2.0, 0.0), (5.0, 0.3, 1e-6), (0.5, 7.0, 2.0)])
    def test_single_kernel_closed_form(self, K, f, lam):
        p = AlignmentProblem(np.array([[K]]), np.array([f]), lam)
        alpha = solve_qp(p)[-1].alpha[0]
        assert alpha == pytest.approx(max(0.0, f / (2 * (K + lam))), abs=1e-10)

    def test_nonpositive_f_gives_origin(self, rng):
        B = rng.normal(size=(3, 5))
        p = AlignmentProblem(B @ B.T, -np.abs(rng.normal(size=3)), 0.01)
        np.testing.assert_allclose(solve_qp(p)[-1].alpha, 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_active_set_oracle(self, seed):
        r = np.random.default_rng(seed)
        p = random_problem(r, 3)
        best_val, best = active_set_bruteforce(p)
        trace = solve_qp(p)
        assert trace[-1].objective == pytest.approx(best_val, abs=1e-8 * max(1.0, abs(best_val)))
        np.testing.assert_allclose(trace[-1].alpha, best, atol=1e-6 * max(1.0, np.abs(best).max()))
        assert kkt_residual(p, trace[-1].alpha) <= 1e-6

    def test_ascent_and_feasibility(self, rng):
        X = rng.normal(size=(12, 3))
        fam = base_family(X)
        p = build_qp(gram(X @ rng.normal(size=(3, 3)), KernelSpec.linear()), fam)
        trace = solve_qp(p)
        vals = [t.objective for t in trace]
        assert all(b >= a - 1e-12 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))
        assert all(np.all(t.alpha >= 0) for t in trace)
        np.testing.assert_allclose(trace[0].alpha, 1.0 / len(fam))
        # objective recorded with the problem's own ridge
        assert trace[-1].objective == pytest.approx(qp_objective(p, trace[-1].alpha), rel=1e-12)

    def test_kta_reported_per_iterate(self, rng):
        X = rng.normal(size=(10, 2))
        fam = base_family(X, FamilyGrid(gaussian_exponents=(-2, 0, 2), poly_degrees=(1, 2)))
        K_S = gram(X, KernelSpec.linear())
        trace = solve_qp(build_qp(K_S, fam))
        ktas = [kta(K_S, combine(fam, t)) for t in trace if np.any(t.alpha > 0)]
        assert all(0 <= a <= 1 + 1e-12 for a in ktas)
        # with poly degree 1 in the family the aligned kernel ends up near the source
        assert ktas[-1] >= ktas[0] - 1e-10

    def test_zero_ridge_singular_falls_back(self):
        p = AlignmentProblem(np.ones((2, 2)), np.array([1.0, 1.0]), 0.0)
        trace = solve_qp(p)
        assert np.all(np.isfinite(trace[-1].alpha))
        assert trace[-1].alpha.sum() == pytest.approx(0.5, rel=1e-4)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            solve_qp(AlignmentProblem(np.array([[np.nan]]), np.array([1.0]), 0.1))


class TestCombine:
    def test_one_hot(self, rng):
        fam = base_family(rng.normal(size=(5, 2)), FamilyGrid(gaussian_exponents=(0, 1), poly_degrees=(2,)))
        np.testing.assert_array_equal(combine(fam, [1.0, 0.0, 0.0]), fam.grams[0])

    def test_zero(self, rng):
        fam = base_family(rng.normal(size=(5, 2)), FamilyGrid(gaussian_exponents=(0,), poly_degrees=(1,)))
        np.testing.assert_array_equal(combine(fam, [0.0, 0.0]), 0.0)

    def test_identity_plus_ones(self):
        fam = family_of(np.eye(3), np.ones((3, 3)))
        np.testing.assert_array_equal(combine(fam, [1.0, 1.0]), np.eye(3) + np.ones((3, 3)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            combine(family_of(np.eye(2)), [1.0, 2.0])


class TestThin:
    def test_subsample_keeps_endpoints(self):
        out = thin(list(range(100)), 10)
        assert len(out) == 10 and out[0] == 0 and out[-1] == 99
        assert out == sorted(set(out))

    def test_pads_short_trace(self):
        assert thin([0, 1, 2], 5) == [0, 1, 2, 2, 2]

    def test_single(self):
        assert thin([0, 1, 2], 1) == [2]
