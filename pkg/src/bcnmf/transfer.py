"""Bridge convex NMF: transfer clustering through an aligned target kernel.

The pipeline:

1. ``K_S`` is the source Gram; a base family of kernels is built on ``X_T``.
2. The alignment QP is solved and its iterate trace thinned to ``n_iter``
   combined kernels ``K_ST``.
3. Each ``K_ST`` is factorized by kernel NMF; its ``H`` gives a partition
   scored by the Davies-Bouldin index under a fixed target kernel.
4. The ``W`` with the smallest valid index is the bridge matrix, and the
   target is factorized by convex NMF with ``W`` held at the bridge.

Random stages draw their seeds from one root seed: child ``i`` of
``numpy.random.SeedSequence(seed)`` feeds stage ``i`` (0 equalization,
1 kernel NMF of every iterate, 2 the final fixed-weight solve, 3 baselines).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .alignment import build_qp, combine, solve_qp, thin
from .evaluation import EmptyClusterError, accuracy, dbi
from .kernels import FamilyGrid, KernelSpec, base_family, gram, kta, median_bandwidth
from .nmf import FactorizationResult, NmfOptions, cnmf, cnmf_fixed_w, knmf, partition

__all__ = [
    "EQUALIZE",
    "NoValidBridgeError",
    "TransferConfig",
    "IterationRecord",
    "TransferResult",
    "stage_seed",
    "equalize_sizes",
    "selection_kernel",
    "run_bcnmf",
    "baseline_cnmf",
    "baseline_kernel_alone",
]

log = logging.getLogger(__name__)

EQUALIZE = ("subsample-source", "bootstrap-target", "none")

STAGE_EQUALIZE, STAGE_KNMF, STAGE_FINAL, STAGE_BASELINE = range(4)


class NoValidBridgeError(RuntimeError):
    """Every alignment iterate produced a partition with an empty cluster."""

    def __init__(self, message, records=()):
        super().__init__(message)
        self.records = list(records)


def stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence(seed).spawn(stage + 1)[stage].generate_state(1)[0])


@dataclass
class TransferConfig:
    r: int = 2
    n_iter: int = 10
    grid: FamilyGrid = field(default_factory=FamilyGrid)
    source_spec: KernelSpec = field(default_factory=KernelSpec.linear)
    # kernel for K_T in the initial alignment diagnostic; None reuses source_spec
    diagnostic_spec: KernelSpec | None = None
    # kernel for DBI selection; None means gaussian with median-heuristic bandwidth on X_T
    selection_spec: KernelSpec | None = None
    equalize: str = "subsample-source"
    seed: int = 0
    max_iters: int = 100
    rel_tol: float = 1e-6
    restarts: int = 5
    lam: float | None = None
    qp_max_steps: int = 500

    def __post_init__(self):
        if self.r < 2:
            raise ValueError(f"cluster count r must be >= 2, got {self.r}")
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.equalize not in EQUALIZE:
            raise ValueError(f"unknown equalization {self.equalize!r}, expected one of {EQUALIZE}")

    def nmf_options(self, stage: int) -> NmfOptions:
        return NmfOptions(k=self.r, max_iters=self.max_iters, rel_tol=self.rel_tol,
                          seed=stage_seed(self.seed, stage), restarts=self.restarts)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "n_iter": self.n_iter,
            "grid": {
                "gaussian_exponents": list(self.grid.gaussian_exponents),
                "poly_degrees": list(self.grid.poly_degrees),
                "include_linear": self.grid.include_linear,
            },
            "source_spec": self.source_spec.to_dict(),
            "diagnostic_spec": None if self.diagnostic_spec is None else self.diagnostic_spec.to_dict(),
            "selection_spec": None if self.selection_spec is None else self.selection_spec.to_dict(),
            "equalize": self.equalize,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "restarts": self.restarts,
            "lam": self.lam,
            "qp_max_steps": self.qp_max_steps,
        }


@dataclass
class IterationRecord:
    iteration: int
    solver_step: int
    alpha: np.ndarray = field(repr=False)
    qp_objective: float
    kta: float
    dbi: float | None
    valid: bool
    selected: bool = False
    W: np.ndarray | None = field(default=None, repr=False)
    knmf_objective: float | None = None


@dataclass
class TransferResult:
    W_star: np.ndarray = field(repr=False)
    H_star: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    a_init: float
    iterations: list[IterationRecord]
    selected_iteration: int
    bridge_dbi: float
    source_ids: np.ndarray = field(repr=False)
    target_ids: np.ndarray = field(repr=False)
    final: FactorizationResult = field(repr=False)
    specs: list[KernelSpec] = field(repr=False, default_factory=list)
    lam: float = 0.0


def equalize_sizes(X_S, X_T, strategy: str = "subsample-source", seed: int = 0):
    """Bring source and target to the same number of rows.

    Returns ``(X_S', X_T', source_ids, target_ids)`` where the ids index the
    original rows. Subsampling keeps the original row order.
    """
    X_S = np.asarray(X_S, dtype=float)
    X_T = np.asarray(X_T, dtype=float)
    if X_S.shape[0] == 0 or X_T.shape[0] == 0:
        raise ValueError("source and target must be non-empty")
    if strategy not in EQUALIZE:
        raise ValueError(f"unknown equalization {strategy!r}, expected one of {EQUALIZE}")
    ns, nt = X_S.shape[0], X_T.shape[0]
    ids_s, ids_t = np.arange(ns), np.arange(nt)
    if ns == nt:
        return X_S, X_T, ids_s, ids_t
    rng = np.random.default_rng(seed)
    if strategy == "none":
        raise ValueError(f"size mismatch: source has {ns} rows, target {nt}; choose an equalization strategy")
    if strategy == "subsample-source":
        if ns < nt:
            raise ValueError(f"source ({ns} rows) is smaller than target ({nt}); use bootstrap-target")
        ids_s = np.sort(rng.choice(ns, size=nt, replace=False))
        return X_S[ids_s], X_T, ids_s, ids_t
    if nt > ns:
        raise ValueError(f"target ({nt} rows) is larger than source ({ns}); use subsample-source")
    ids_t = rng.choice(nt, size=ns, replace=True)
    return X_S, X_T[ids_t], ids_s, ids_t


def selection_kernel(X_T, spec: KernelSpec | None = None) -> np.ndarray:
    if spec is None:
        spec = KernelSpec.gaussian(median_bandwidth(X_T))
    return gram(X_T, spec)


def _score(K_sel, labels, r):
    try:
        return dbi(K_sel, labels, r), True
    except EmptyClusterError:
        return None, False


def run_bcnmf(X_S, X_T, config: TransferConfig) -> TransferResult:
    X_S, X_T, ids_s, ids_t = equalize_sizes(X_S, X_T, config.equalize,
                                            stage_seed(config.seed, STAGE_EQUALIZE))
    n = X_T.shape[0]
    if config.r > n:
        raise ValueError(f"r={config.r} exceeds the number of instances {n}")

    K_S = gram(X_S, config.source_spec)
    K_T = gram(X_T, config.diagnostic_spec or config.source_spec)
    a_init = kta(K_S, K_T)
    log.info("initial alignment %.4f", a_init)

    family = base_family(X_T, config.grid)
    problem = build_qp(K_S, family, config.lam)
    trace = solve_qp(problem, max_steps=config.qp_max_steps)
    iterates = thin(trace, config.n_iter)
    K_sel = selection_kernel(X_T, config.selection_spec)
    opts = config.nmf_options(STAGE_KNMF)

    records, cache = [], {}
    for i, aw in enumerate(iterates, start=1):
        if aw.step not in cache:
            K_ST = combine(family, aw)
            fac = knmf(K_ST, opts)
            labels = partition(fac.H)
            d, ok = _score(K_sel, labels, config.r)
            cache[aw.step] = (kta(K_S, K_ST), d, ok, fac)
        a, d, ok, fac = cache[aw.step]
        records.append(IterationRecord(i, aw.step, aw.alpha, aw.objective, a, d, ok,
                                       W=fac.W, knmf_objective=fac.objective))
        log.debug("iterate %d step %d kta %.4f dbi %s", i, aw.step, a, d)

    valid = [rec for rec in records if rec.valid]
    if not valid:
        raise NoValidBridgeError("every alignment iterate gave a partition with an empty cluster", records)
    best = valid[0]
    for rec in valid[1:]:
        if rec.dbi < best.dbi:
            best = rec
    best.selected = True

    final = cnmf_fixed_w(X_T, best.W, config.nmf_options(STAGE_FINAL))
    return TransferResult(
        W_star=best.W, H_star=final.H, labels=partition(final.H), a_init=a_init,
        iterations=records, selected_iteration=best.iteration, bridge_dbi=best.dbi,
        source_ids=ids_s, target_ids=ids_t, final=final, specs=family.specs, lam=problem.lam,
    )


def baseline_cnmf(X_T, r: int, opts: NmfOptions):
    """Convex NMF of the target alone; returns the factorization and its partition."""
    if opts.k != r:
        opts = NmfOptions(k=r, max_iters=opts.max_iters, rel_tol=opts.rel_tol,
                          seed=opts.seed, restarts=opts.restarts)
    res = cnmf(X_T, opts)
    return res, partition(res.H)


def baseline_kernel_alone(X_T, r: int, family, opts: NmfOptions, truth=None, K_sel=None) -> dict:
    """Kernel NMF with each family member on its own.

    Returns ``{"rows": [...], "best": row}``; the best row maximizes accuracy
    when ``truth`` is given and otherwise minimizes DBI.
    """
    if opts.k != r:
        opts = NmfOptions(k=r, max_iters=opts.max_iters, rel_tol=opts.rel_tol,
                          seed=opts.seed, restarts=opts.restarts)
    if K_sel is None:
        K_sel = selection_kernel(X_T)
    rows = []
    for spec, G in zip(family.specs, family.grams):
        labels = partition(knmf(G, opts).H)
        d, _ = _score(K_sel, labels, r)
        row = {"kernel": spec.label(), "dbi": d}
        if truth is not None:
            row["accuracy"] = accuracy(labels, truth).accuracy
        rows.append(row)
    if truth is not None:
        best = max(rows, key=lambda row: row["accuracy"])
    else:
        scored = [row for row in rows if row["dbi"] is not None]
        best = min(scored, key=lambda row: row["dbi"]) if scored else None
    return {"rows": rows, "best": best}
