"""Unnormalized kernel alignment as a nonnegative quadratic program.

Maximizes ``-a'(Q + lam I)a + f'a`` over ``a >= 0`` where
``Q[i, j] = <K_i, K_j>_F`` and ``f[i] = <K_i, K_S>_F``. The solver is
projected gradient ascent, and its full iterate trace is returned because
the transfer loop consumes every intermediate combined kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelFamily

__all__ = ["AlignmentProblem", "AlphaWeights", "build_qp", "solve_qp", "qp_objective",
           "kkt_residual", "combine", "thin"]

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 60


@dataclass
class AlignmentProblem:
    Kmat: np.ndarray
    f: np.ndarray
    lam: float
    family: KernelFamily | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.f.size


@dataclass
class AlphaWeights:
    alpha: np.ndarray
    objective: float
    step: int = 0


def default_ridge(Kmat) -> float:
    r = 1e-6 * float(np.mean(np.diag(Kmat)))
    return r if r > 0 else 1e-6


def build_qp(K_S, family: KernelFamily, lam: float | None = None) -> AlignmentProblem:
    """Frobenius Gram of the family and its inner products with the source kernel.

    ``lam=None`` picks ``1e-6 * mean(diag(Kmat))``.
    """
    K_S = np.asarray(K_S, dtype=float)
    if K_S.shape != (family.n, family.n):
        raise ValueError(f"source Gram {K_S.shape} does not match family size {family.n}")
    G = np.stack([g.ravel() for g in family.grams])
    Kmat = G @ G.T
    Kmat = 0.5 * (Kmat + Kmat.T)
    f = G @ K_S.ravel()
    if lam is None:
        lam = default_ridge(Kmat)
    if lam < 0:
        raise ValueError(f"ridge must be >= 0, got {lam}")
    return AlignmentProblem(Kmat, f, float(lam), family)


def qp_objective(problem: AlignmentProblem, alpha) -> float:
    a = np.asarray(alpha, dtype=float)
    return float(-a @ (problem.Kmat @ a) - problem.lam * (a @ a) + problem.f @ a)


def _effective_ridge(problem: AlignmentProblem) -> float:
    lam = problem.lam
    if lam == 0:
        vals = np.linalg.eigvalsh(problem.Kmat)
        if vals[0] <= 1e-12 * max(vals[-1], 0.0) or vals[-1] <= 0:
            lam = default_ridge(problem.Kmat)
            log.warning("alignment Gram is not positive definite; using ridge %.3g", lam)
    return lam


def kkt_residual(problem: AlignmentProblem, alpha, lam: float | None = None) -> float:
    """Scale-free projected-gradient norm at ``alpha``; zero exactly at the maximizer."""
    lam = problem.lam if lam is None else lam
    Q = problem.Kmat + lam * np.eye(problem.size)
    lip = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    grad = problem.f - 2.0 * Q @ alpha
    moved = np.maximum(alpha + grad / lip, 0.0) - alpha
    scale = max(float(np.max(np.abs(problem.f))), lip * float(np.max(alpha)), 1e-300)
    return float(np.max(np.abs(moved))) * lip / scale


def solve_qp(problem: AlignmentProblem, max_steps: int = 500, tol: float = 1e-8,
             alpha0=None) -> list[AlphaWeights]:
    """Projected gradient ascent from the uniform vector; returns every accepted iterate.

    Trial steps are Barzilai-Borwein lengths (``1/L`` on the first step),
    halved until the Armijo condition with constant ``1e-4`` holds, so the
    objective never decreases along the trace.
    """
    Kmat = np.asarray(problem.Kmat, dtype=float)
    f = np.asarray(problem.f, dtype=float)
    if not (np.all(np.isfinite(Kmat)) and np.all(np.isfinite(f)) and np.isfinite(problem.lam)):
        raise ValueError("alignment problem contains non-finite data")
    k = f.size
    lam = _effective_ridge(problem)
    Q = Kmat + lam * np.eye(k)

    def value(a):
        return float(-a @ (Q @ a) + f @ a)

    lip = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    a = np.full(k, 1.0 / k) if alpha0 is None else np.maximum(np.asarray(alpha0, dtype=float), 0.0)
    g = f - 2.0 * Q @ a
    cur = value(a)
    trace = [AlphaWeights(a.copy(), cur, 0)]
    step = 1.0 / lip
    fscale = max(float(np.max(np.abs(f))), 1e-300)
    for it in range(1, max_steps + 1):
        moved = np.maximum(a + g / lip, 0.0) - a
        if np.max(np.abs(moved)) * lip <= tol * max(fscale, lip * float(np.max(a))):
            break
        s = step
        for _ in range(MAX_HALVINGS):
            cand = np.maximum(a + s * g, 0.0)
            new = value(cand)
            if new >= cur + ARMIJO * float(g @ (cand - a)):
                break
            s *= 0.5
        else:
            break
        if np.array_equal(cand, a):
            break
        g_new = f - 2.0 * Q @ cand
        da = cand - a
        curv = float(da @ (g - g_new))  # = 2 da'Q da > 0
        step = float(da @ da) / curv if curv > 0 else 1.0 / lip
        step = min(max(step, 1.0 / lip), 1e12 / lip)
        a, g, cur = cand, g_new, new
        trace.append(AlphaWeights(a.copy(), cur, it))
    return trace


def combine(family: KernelFamily, alpha) -> np.ndarray:
    """``sum_n alpha_n K_n`` over the family."""
    a = np.asarray(getattr(alpha, "alpha", alpha), dtype=float)
    if a.shape != (len(family),):
        raise ValueError(f"alpha has length {a.size}, family has {len(family)} kernels")
    out = np.zeros_like(family.grams[0])
    for w, G in zip(a, family.grams):
        if w != 0:
            out += w * G
    return out


def thin(trace: list, n_iter: int) -> list:
    """Exactly ``n_iter`` entries of ``trace``.

    Longer traces are subsampled evenly, keeping the first and last iterate;
    shorter ones are padded with the final (converged) iterate.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    m = len(trace)
    if m >= n_iter:
        idx = np.round(np.linspace(0, m - 1, n_iter)).astype(int) if n_iter > 1 else np.array([m - 1])
    else:
        idx = np.concatenate([np.arange(m), np.full(n_iter - m, m - 1)])
    return [trace[i] for i in idx]
