"""Kernel functions, Gram matrices, alignment and dependence estimators.

Gram matrices are plain dense ``float64`` arrays of shape ``(n, n)``.
Data matrices hold one instance per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

__all__ = [
    "KernelSpec",
    "KernelFamily",
    "FamilyGrid",
    "AlignmentUndefinedError",
    "gram",
    "frobenius_inner",
    "kta",
    "center",
    "hsic_biased",
    "parzen_gram",
    "qmi_parzen",
    "median_bandwidth",
    "base_family",
]

KINDS = ("gaussian", "polynomial", "linear")


class AlignmentUndefinedError(ValueError):
    """Raised when alignment involves an all-zero Gram matrix."""


@dataclass(frozen=True)
class KernelSpec:
    """A parameterized kernel.

    ``gaussian`` uses ``bandwidth`` (sigma), ``polynomial`` uses ``degree``
    and is homogeneous, ``linear`` takes no parameter.
    """

    kind: str
    bandwidth: float | None = None
    degree: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}, expected one of {KINDS}")
        if self.kind == "gaussian":
            if self.bandwidth is None or not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ValueError(f"gaussian bandwidth must be a positive real, got {self.bandwidth!r}")
        if self.kind == "polynomial":
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"polynomial degree must be an integer >= 1, got {self.degree!r}")

    @classmethod
    def gaussian(cls, bandwidth: float) -> "KernelSpec":
        return cls("gaussian", bandwidth=float(bandwidth))

    @classmethod
    def polynomial(cls, degree: int) -> "KernelSpec":
        return cls("polynomial", degree=int(degree))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    def label(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian(sigma={self.bandwidth:.6g})"
        if self.kind == "polynomial":
            return f"polynomial(d={self.degree})"
        return "linear"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gaussian":
            out["bandwidth"] = self.bandwidth
        elif self.kind == "polynomial":
            out["degree"] = self.degree
        return out


def _check_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a non-empty 2-D data matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite entries")
    return X


def _check_square(K, name="K") -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {K.shape}")
    return K


def gram(X, spec: KernelSpec) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(x_i, x_j)`` over the rows of ``X``.

    Gaussian: ``exp(-||x - y||^2 / (2 sigma^2))``; polynomial: ``(x.y)^d``;
    linear: ``x.y``.
    """
    X = _check_data(X)
    if spec.kind == "gaussian":
        sq = squareform(pdist(X, "sqeuclidean")) if X.shape[0] > 1 else np.zeros((1, 1))
        return np.exp(-sq / (2.0 * spec.bandwidth**2))
    G = X @ X.T
    G = 0.5 * (G + G.T)
    if spec.kind == "polynomial":
        return G ** spec.degree
    return G


def frobenius_inner(K1, K2) -> float:
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    if K1.shape != K2.shape:
        raise ValueError(f"dimension mismatch: {K1.shape} vs {K2.shape}")
    return float(np.sum(K1 * K2))


def kta(K1, K2) -> float:
    """Kernel target alignment: cosine of two Gram matrices under the Frobenius product."""
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    n1 = np.linalg.norm(K1)
    n2 = np.linalg.norm(K2)
    if n1 == 0 or n2 == 0:
        raise AlignmentUndefinedError("alignment is undefined for an all-zero Gram matrix")
    # normalize first so poly kernels of large data do not overflow the product
    return frobenius_inner(K1 / n1, K2 / n2)


def center(K) -> np.ndarray:
    """Double-centered kernel ``HKH`` with ``H = I - 11^T/m``."""
    K = _check_square(K)
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def hsic_biased(K, L) -> float:
    """Biased empirical HSIC, ``tr(KHLH) / m^2``."""
    K = _check_square(K)
    L = _check_square(L, "L")
    if K.shape != L.shape:
        raise ValueError(f"dimension mismatch: {K.shape} vs {L.shape}")
    m = K.shape[0]
    H = np.eye(m) - np.full((m, m), 1.0 / m)
    return float(np.trace(K @ H @ L @ H)) / m**2


def parzen_gram(X, spec: KernelSpec) -> np.ndarray:
    """Inner products of normalized Gaussian Parzen windows centred on the rows of ``X``.

    ``int N(z; x_i, s^2 I) N(z; x_j, s^2 I) dz = (4 pi s^2)^(-d/2) exp(-||x_i - x_j||^2 / (4 s^2))``,
    i.e. a Gaussian Gram of bandwidth ``s * sqrt(2)`` scaled by the window
    normalization constant. The constant is kept.
    """
    if spec.kind != "gaussian":
        raise ValueError(f"unsupported Parzen window {spec.kind!r}: only gaussian windows are supported")
    X = _check_data(X)
    d = X.shape[1]
    const = (4.0 * np.pi * spec.bandwidth**2) ** (-d / 2.0)
    return const * gram(X, KernelSpec.gaussian(spec.bandwidth * np.sqrt(2.0)))


def qmi_parzen(X, Y, kx: KernelSpec, ky: KernelSpec) -> float:
    """Quadratic mutual information between paired samples under Parzen density estimates.

    Equals ``hsic_biased`` evaluated on the window inner-product Grams.
    """
    X = _check_data(X)
    Y = _check_data(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row-count mismatch: {X.shape[0]} vs {Y.shape[0]}")
    return hsic_biased(parzen_gram(X, kx), parzen_gram(Y, ky))


def median_bandwidth(X) -> float:
    """Median pairwise Euclidean distance; falls back to 1.0 when degenerate."""
    X = _check_data(X)
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class FamilyGrid:
    """Base-kernel grid: Gaussian bandwidths ``2**e`` plus homogeneous polynomials."""

    gaussian_exponents: tuple[int, ...] = tuple(range(-10, 11))
    poly_degrees: tuple[int, ...] = (1, 2, 3)
    include_linear: bool = False

    @classmethod
    def wide(cls) -> "FamilyGrid":
        return cls(gaussian_exponents=tuple(range(-20, 21)))

    @classmethod
    def linear_only(cls) -> "FamilyGrid":
        return cls(gaussian_exponents=(), poly_degrees=(), include_linear=True)

    def specs(self) -> list[KernelSpec]:
        out = [KernelSpec.gaussian(2.0**e) for e in self.gaussian_exponents]
        out += [KernelSpec.polynomial(d) for d in self.poly_degrees]
        if self.include_linear:
            out.append(KernelSpec.linear())
        return out


@dataclass
class KernelFamily:
    specs: list[KernelSpec]
    grams: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        if not self.specs:
            raise ValueError("kernel family is empty")
        if len(self.specs) != len(self.grams):
            raise ValueError("specs and grams differ in length")
        n = self.grams[0].shape
        if any(G.shape != n for G in self.grams):
            raise ValueError("family Gram matrices differ in size")

    def __len__(self):
        return len(self.specs)

    @property
    def n(self) -> int:
        return self.grams[0].shape[0]


def base_family(X, grid: FamilyGrid | Sequence[KernelSpec] | None = None) -> KernelFamily:
    """Gram matrices of every kernel in ``grid`` evaluated on the same rows of ``X``."""
    X = _check_data(X)
    if grid is None:
        grid = FamilyGrid()
    specs = grid.specs() if isinstance(grid, FamilyGrid) else list(grid)
    if not specs:
        raise ValueError("kernel grid is empty")
    return KernelFamily(specs, [gram(X, s) for s in specs])
