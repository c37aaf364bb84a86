"""Synthetic two-domain clustering tasks."""

from __future__ import annotations

import numpy as np

__all__ = ["rotation", "make_rotated_pair"]


def rotation(d: int, angle_deg: float) -> np.ndarray:
    """Rotation by ``angle_deg`` in the plane of the first two coordinates."""
    t = np.deg2rad(angle_deg)
    R = np.eye(d)
    R[:2, :2] = [[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]
    return R


def make_rotated_pair(k: int = 3, per_cluster: int = 20, d: int = 5, angle: float = 30.0,
                      noise: float = 0.3, seed: int = 0, scale: float = 1.0, spread: float = 0.3):
    """Paired source/target Gaussian mixtures.

    Source cluster ``c`` is centred on ``scale * e_c`` (a vertex of the scaled
    simplex) with isotropic standard deviation ``spread``. Target row ``i`` is
    source row ``i`` rotated by ``angle`` degrees in the first two coordinates
    plus isotropic noise of standard deviation ``noise``.

    Returns ``(X_S, X_T, labels)`` with rows grouped by cluster.
    """
    if k < 2:
        raise ValueError(f"need at least 2 clusters, got {k}")
    if per_cluster < 1:
        raise ValueError(f"per-cluster count must be >= 1, got {per_cluster}")
    if d < 2 or d < k:
        raise ValueError(f"dimension must be >= max(2, k); got d={d}, k={k}")
    if noise < 0 or spread < 0 or scale <= 0:
        raise ValueError("noise and spread must be >= 0 and scale > 0")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), per_cluster)
    means = scale * np.eye(d)[:k]
    X_S = means[labels] + spread * rng.standard_normal((labels.size, d))
    X_T = X_S @ rotation(d, angle).T + noise * rng.standard_normal((labels.size, d))
    return X_S, X_T, labels
