"""Multiplicative-update NMF engines: standard, convex, kernel and fixed-weight convex.

Data matrices hold one instance per row, so for ``X`` of shape ``(n, d)`` the
convex factorization approximates the instance columns ``X.T`` by
``X.T @ W @ H.T`` with ``W, H`` of shape ``(n, k)``. Everything the convex
updates need is the instance Gram ``A = X @ X.T``; kernel NMF runs the same
updates with ``A = K``.

Updates are the square-root rules for a mixed-sign ``A`` split into
``A+ = (|A| + A) / 2`` and ``A- = (|A| - A) / 2``::

    H <- H * sqrt((A+ W + H W'A-W) / (A- W + H W'A+W))
    W <- W * sqrt((A+ H + A- W H'H) / (A- H + A+ W H'H))

Every denominator gets ``EPS`` added. An entry that reaches exactly zero
stays zero for the rest of the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EPS",
    "NmfOptions",
    "FactorizationResult",
    "nmf",
    "cnmf",
    "knmf",
    "cnmf_fixed_w",
    "reconstruction_error",
    "feature_space_error",
    "partition",
]

EPS = 1e-12


@dataclass(frozen=True)
class NmfOptions:
    k: int
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    restarts: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")


@dataclass
class FactorizationResult:
    """Factor pair with its objective trace.

    For :func:`nmf`, ``W`` holds the basis ``U`` (features x k); for the
    convex engines it is the n x k weight matrix.
    """

    W: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    objective_trace: list[float]
    iterations_run: int
    converged: bool
    restart: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def labels(self) -> np.ndarray:
        return partition(self.H)


def partition(H) -> np.ndarray:
    """Hard cluster assignment by row-argmax of ``H``."""
    return np.asarray(H).argmax(axis=1)


def _split(A):
    absA = np.abs(A)
    return (absA + A) / 2.0, (absA - A) / 2.0


def _as_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite entries")
    return X


def _check_k(k, n):
    if k > n:
        raise ValueError(f"k={k} exceeds the number of instances n={n}")


def reconstruction_error(X, W, H) -> float:
    """``||X' - X' W H'||_F^2`` for row-instance ``X``.

    For a symmetric Gram ``K`` passed as ``X`` this is ``||K - K W H'||_F^2``.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    H = np.asarray(H, dtype=float)
    n = X.shape[0]
    if W.shape[0] != n or H.shape[0] != n or W.shape[1] != H.shape[1]:
        raise ValueError(f"shape mismatch: X {X.shape}, W {W.shape}, H {H.shape}")
    R = X.T - (X.T @ W) @ H.T
    return float(np.sum(R * R))


def feature_space_error(K, W, H) -> float:
    """``||phi - phi W H'||^2`` expressed through the Gram ``K`` alone (the kernel NMF objective)."""
    K = np.asarray(K, dtype=float)
    KW = K @ W
    return float(np.trace(K) - 2.0 * np.sum(H * KW) + np.sum((W.T @ KW) * (H.T @ H)))


def _factor(K) -> np.ndarray:
    """``L`` with ``L @ L.T == K`` (negative eigenvalues clipped), used for cancellation-free objectives."""
    vals, vecs = np.linalg.eigh(K)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _objective(L, W, H) -> float:
    R = L.T - (L.T @ W) @ H.T
    return float(np.sum(R * R))


def _init(rng, shape):
    # uniform on (0, 1]
    return 1.0 - rng.random(shape)


def _seeds(opts: NmfOptions):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(opts.seed).spawn(opts.restarts)]


def _done(prev, cur, opts, floor):
    if cur <= floor:
        return True
    return prev - cur <= opts.rel_tol * prev


def _convex_run(A, L, W, H, opts, update_w=True):
    Ap, An = _split(A)
    trace = [_objective(L, W, H)]
    floor = 1e-14 * float(np.sum(L * L))
    converged = trace[0] <= floor
    it = 0
    while not converged and it < opts.max_iters:
        ApW, AnW = Ap @ W, An @ W
        num = ApW + H @ (W.T @ AnW)
        den = AnW + H @ (W.T @ ApW) + EPS
        H = H * np.sqrt(num / den)
        if update_w:
            HtH = H.T @ H
            num = Ap @ H + (An @ W) @ HtH
            den = An @ H + (Ap @ W) @ HtH + EPS
            W = W * np.sqrt(num / den)
        trace.append(_objective(L, W, H))
        it += 1
        converged = _done(trace[-2], trace[-1], opts, floor)
    return W, H, trace, it, converged


def _best(runs) -> FactorizationResult:
    best = runs[0]
    for r in runs[1:]:
        if r.objective < best.objective:
            best = r
    return best


def nmf(X, opts: NmfOptions) -> FactorizationResult:
    """Standard NMF ``X' ~ U H'`` by Lee-Seung multiplicative updates.

    ``X`` is ``(n, d)`` with instances as rows; the result's ``W`` is the
    ``(d, k)`` basis ``U`` and ``H`` is ``(n, k)``.
    """
    X = _as_data(X)
    if np.any(X < 0):
        raise ValueError("nmf requires a nonnegative matrix; use cnmf for mixed-sign data")
    V = X.T
    floor = 1e-14 * float(np.sum(V * V))
    runs = []
    for idx, rng in enumerate(_seeds(opts)):
        U = _init(rng, (V.shape[0], opts.k))
        H = _init(rng, (V.shape[1], opts.k))
        R = V - U @ H.T
        trace = [float(np.sum(R * R))]
        converged = trace[0] <= floor
        it = 0
        while not converged and it < opts.max_iters:
            H = H * (V.T @ U) / (H @ (U.T @ U) + EPS)
            U = U * (V @ H) / (U @ (H.T @ H) + EPS)
            R = V - U @ H.T
            trace.append(float(np.sum(R * R)))
            it += 1
            converged = _done(trace[-2], trace[-1], opts, floor)
        runs.append(FactorizationResult(U, H, trace, it, converged, idx))
    return _best(runs)


def _convex(A, L, n, opts):
    _check_k(opts.k, n)
    runs = []
    for idx, rng in enumerate(_seeds(opts)):
        W0 = _init(rng, (n, opts.k))
        H0 = _init(rng, (n, opts.k))
        W, H, trace, it, conv = _convex_run(A, L, W0, H0, opts)
        runs.append(FactorizationResult(W, H, trace, it, conv, idx))
    return _best(runs)


def cnmf(X, opts: NmfOptions) -> FactorizationResult:
    """Convex NMF of mixed-sign row-instance data, ``X' ~ X' W H'`` with ``W, H >= 0``."""
    X = _as_data(X)
    A = X @ X.T
    return _convex(0.5 * (A + A.T), X, X.shape[0], opts)


def knmf(K, opts: NmfOptions) -> FactorizationResult:
    """Kernel NMF: convex NMF in the feature space of the Gram matrix ``K``.

    The traced objective is :func:`feature_space_error`.
    """
    K = _as_data(K)
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {K.shape}")
    if not np.allclose(K, K.T, rtol=1e-10, atol=1e-12 * max(1.0, float(np.abs(K).max()))):
        raise ValueError("Gram matrix is not symmetric")
    K = 0.5 * (K + K.T)
    return _convex(K, _factor(K), K.shape[0], opts)


def cnmf_fixed_w(X, W, opts: NmfOptions, H_init=None) -> FactorizationResult:
    """Convex NMF of ``X`` with the weight matrix held at ``W``; only ``H`` is updated.

    Without ``H_init`` each restart draws a uniform ``H`` and rescales it so the
    initial reconstruction has the norm of ``X``; rescaling ``W`` by ``c``
    then rescales the whole ``H`` trajectory by ``1/c``.
    """
    X = _as_data(X)
    W = np.asarray(W, dtype=float)
    n = X.shape[0]
    if W.ndim != 2 or W.shape[0] != n:
        raise ValueError(f"W has shape {W.shape}, expected ({n}, k)")
    if np.any(W < 0):
        raise ValueError("W must be nonnegative")
    A = X @ X.T
    A = 0.5 * (A + A.T)
    k = W.shape[1]
    fixed = NmfOptions(k=k, max_iters=opts.max_iters, rel_tol=opts.rel_tol,
                       seed=opts.seed, restarts=opts.restarts)
    if H_init is not None:
        H0 = np.asarray(H_init, dtype=float)
        if H0.shape != (n, k) or np.any(H0 < 0):
            raise ValueError(f"H_init must be a nonnegative ({n}, {k}) matrix")
        _, H, trace, it, conv = _convex_run(A, X, W, H0.copy(), fixed, update_w=False)
        return FactorizationResult(W, H, trace, it, conv, 0)
    WtAW = W.T @ A @ W
    runs = []
    for idx, rng in enumerate(_seeds(fixed)):
        H0 = _init(rng, (n, k))
        scale = float(np.sum(WtAW * (H0.T @ H0)))
        if scale > 0:
            H0 = H0 * np.sqrt(np.trace(A) / scale)
        _, H, trace, it, conv = _convex_run(A, X, W, H0, fixed, update_w=False)
        runs.append(FactorizationResult(W, H, trace, it, conv, idx))
    return _best(runs)
