"""Clustering evaluation: kernel Davies-Bouldin index, matched accuracy, learning curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = ["EmptyClusterError", "EvalReport", "dbi", "confusion", "accuracy", "learning_curve"]


class EmptyClusterError(ValueError):
    """The Davies-Bouldin index is undefined when a cluster has no members."""


@dataclass
class EvalReport:
    dbi: float | None
    accuracy: float | None
    confusion: np.ndarray = field(repr=False)
    matching: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "dbi": self.dbi,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "matching": [list(p) for p in self.matching],
        }


def _labels(labels, k=None):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    if labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer)):
        raise ValueError("cluster ids must be nonnegative integers")
    if k is None:
        k = int(labels.max()) + 1 if labels.size else 0
    elif labels.size and labels.max() >= k:
        raise ValueError(f"cluster id {labels.max()} out of range for k={k}")
    return labels, k


def dbi(K, labels, k: int | None = None) -> float:
    """Davies-Bouldin index of a hard partition, with distances in the RKHS of ``K``.

    Scatter of a cluster is the mean member-to-centroid distance; separation
    is the centroid-to-centroid distance. Coincident centroids give ``inf``.
    """
    K = np.asarray(K, dtype=float)
    labels, k = _labels(labels, k)
    if K.shape != (labels.size, labels.size):
        raise ValueError(f"Gram shape {K.shape} does not match {labels.size} labels")
    if k < 2:
        raise ValueError(f"DBI needs at least 2 clusters, got k={k}")
    Z = np.zeros((labels.size, k))
    Z[np.arange(labels.size), labels] = 1.0
    sizes = Z.sum(axis=0)
    if np.any(sizes == 0):
        raise EmptyClusterError(f"empty cluster(s): {np.flatnonzero(sizes == 0).tolist()}")
    M = Z / sizes                        # centroid weights
    KM = K @ M                           # <phi(x), c_j>
    CC = M.T @ KM                        # <c_i, c_j>
    diag_c = np.diag(CC)
    own = KM[np.arange(labels.size), labels]
    d2 = np.diag(K) - 2.0 * own + diag_c[labels]
    dist = np.sqrt(np.clip(d2, 0.0, None))
    scatter = (Z * dist[:, None]).sum(axis=0) / sizes
    sep2 = diag_c[:, None] + diag_c[None, :] - 2.0 * CC
    sep = np.sqrt(np.clip(sep2, 0.0, None))
    worst = np.empty(k)
    for i in range(k):
        ratios = []
        for j in range(k):
            if j == i:
                continue
            num = scatter[i] + scatter[j]
            ratios.append(np.inf if sep[i, j] == 0 else num / sep[i, j])
        worst[i] = max(ratios)
    return float(worst.mean())


def confusion(pred, truth) -> np.ndarray:
    """Counts ``C[p, t]`` of instances predicted ``p`` with true label ``t``."""
    pred, kp = _labels(pred)
    truth, kt = _labels(truth)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    C = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(C, (pred, truth), 1)
    return C


def accuracy(pred, truth, K=None) -> EvalReport:
    """Clustering accuracy under the best one-to-one matching of cluster ids to labels.

    The matching maximizes total agreement (Hungarian algorithm); unmatched
    clusters count as errors. When ``K`` is given the report also carries
    the kernel DBI of ``pred``.
    """
    C = confusion(pred, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    n = int(C.sum())
    acc = float(C[rows, cols].sum()) / n if n else 0.0
    d = dbi(K, pred) if K is not None else None
    return EvalReport(dbi=d, accuracy=acc, confusion=C,
                      matching=[(int(r), int(c)) for r, c in zip(rows, cols)])


def learning_curve(result, truth=None, X_T=None, opts=None) -> list[dict]:
    """One row per alignment iterate of a transfer run.

    Accuracy per iterate requires re-solving the fixed-weight factorization
    of ``X_T`` with that iterate's weights, so it is only computed when
    ``truth``, ``X_T`` and ``opts`` are all supplied.
    """
    from .nmf import cnmf_fixed_w, partition

    rows = []
    for rec in result.iterations:
        row = {"iter": rec.iteration, "kta": rec.kta, "dbi": rec.dbi, "selected": rec.selected}
        if truth is not None and X_T is not None and opts is not None:
            H = cnmf_fixed_w(X_T, rec.W, opts).H
            row["accuracy"] = accuracy(partition(H), truth).accuracy
        rows.append(row)
    return rows
