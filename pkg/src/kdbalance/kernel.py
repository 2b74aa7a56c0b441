"""Gaussian kernel machinery: bandwidth selection, the signed block matrix
driving the balancing objective, and the kernel-distance balance statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllPointsIdentical, DegenerateWitness
from .model import BalanceWeights, Dataset


def squared_distances(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of A and B.

    With B omitted the result is the self-distance matrix with an exactly
    zero diagonal. Tiny negative values from cancellation are clipped to 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    self_pair = B is None
    B = A if self_pair else np.atleast_2d(np.asarray(B, dtype=float))
    aa = np.einsum("ij,ij->i", A, A)
    bb = aa if self_pair else np.einsum("ij,ij->i", B, B)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    if self_pair:
        np.fill_diagonal(d2, 0.0)
        d2 = (d2 + d2.T) / 2.0
    return d2


def gaussian_kernel(x, y, sigma2: float) -> float:
    """k(x, y) = exp(-||x - y||^2 / sigma2), always in (0, 1]."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"points differ in dimension: {x.shape} vs {y.shape}")
    return float(np.exp(-np.sum((x - y) ** 2) / sigma2))


def gaussian_gram(A: np.ndarray, B: np.ndarray | None = None, *, sigma2: float) -> np.ndarray:
    """Kernel matrix [k(a_i, b_j)] for row sets A and B (B=None means A vs A)."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    return np.exp(-squared_distances(A, B) / sigma2)


@dataclass(frozen=True)
class Bandwidth:
    """A squared kernel bandwidth, sigma2 > 0."""

    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")


def median_bandwidth(X: np.ndarray, square_median: bool = False) -> Bandwidth:
    """Median-heuristic bandwidth over all rows of X.

    Takes the median of the positive squared pairwise Euclidean distances
    (zeros from duplicate rows are excluded; even counts use the midpoint of
    the two central values). By default that median is used directly as
    sigma2. With square_median=True the median is treated as sigma itself and
    sigma2 = median**2.

    Raises:
        AllPointsIdentical: no positive pairwise distance exists.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise AllPointsIdentical("need at least two rows to estimate a bandwidth")
    d2 = squared_distances(X)
    upper = d2[np.triu_indices(n, k=1)]
    positive = upper[upper > 0]
    if positive.size == 0:
        raise AllPointsIdentical("all rows coincide; every pairwise distance is zero")
    med = float(np.median(positive))
    return Bandwidth(med * med if square_median else med)


@dataclass(frozen=True)
class InformationMatrix:
    """Signed block kernel matrix in treated-first order.

    K[a, b] = s_a * s_b * k(X_a, X_b) + lam * 1{a == b}, where s is +1 for
    treated and -1 for control rows and rows are permuted treated-first.
    ordering maps an original row index to its block position.
    """

    K: np.ndarray
    lam: float
    ordering: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        ordering = np.asarray(self.ordering, dtype=int)
        ordering.setflags(write=False)
        object.__setattr__(self, "ordering", ordering)
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")


def information_matrix(data: Dataset, sigma2: float, lam: float = 0.0) -> InformationMatrix:
    """Assemble the signed kernel matrix [[K1, -K10], [-K10', K0]] + lam*I.

    The result is symmetric, has diagonal exactly 1 + lam, and is positive
    semidefinite for lam >= 0 (strictly definite when all points are distinct
    or lam > 0).
    """
    treated = data.treated_index()
    control = data.control_index()
    block = np.concatenate([treated, control])
    Xp = data.X[block]
    signs = np.concatenate([np.ones(treated.size), -np.ones(control.size)])
    K = gaussian_gram(Xp, sigma2=sigma2) * np.outer(signs, signs)
    if lam:
        K = K + lam * np.eye(K.shape[0])
    ordering = np.empty(data.n, dtype=int)
    ordering[block] = np.arange(data.n)
    return InformationMatrix(K=K, lam=float(lam), ordering=ordering)


def rw_stat(data: Dataset, w: BalanceWeights, sigma2: float) -> float:
    """Weighted kernel balance statistic.

    rw = p'K1 p + q'K0 q - 2 p'K10 q, the squared kernel distance between the
    p-weighted treated sample and the q-weighted control sample. Equals
    (p, q)' K (p, q) for the lam=0 information matrix; nonnegative up to
    roundoff.
    """
    X1 = data.X[data.T == 1]
    X0 = data.X[data.T == 0]
    G11 = gaussian_gram(X1, sigma2=sigma2)
    G00 = gaussian_gram(X0, sigma2=sigma2)
    G10 = gaussian_gram(X1, X0, sigma2=sigma2)
    p, q = w.p, w.q
    return float(p @ G11 @ p + q @ G00 @ q - 2.0 * (p @ G10 @ q))


def kernel_distance(data: Dataset, w: BalanceWeights, sigma2: float) -> float:
    """sqrt of the rw statistic, clipped at zero before the root."""
    return math.sqrt(max(rw_stat(data, w, sigma2), 0.0))


def witness_eval(x, data: Dataset, w: BalanceWeights, sigma2: float):
    """Evaluate the unit-norm witness of the weighted mean discrepancy.

    f(x) = sum_i s_i w_i k(x, X_i) / kernel_distance, with s_i = +1 on treated
    and -1 on control units. Accepts a single point (D,) or a batch (M, D);
    returns a float or an (M,) array. The witness attains the kernel distance
    at the weighted sample itself and never exceeds it on unit-norm functions.

    Raises:
        DegenerateWitness: the kernel distance is <= 1e-12.
    """
    kd = kernel_distance(data, w, sigma2)
    if kd <= 1e-12:
        raise DegenerateWitness(f"kernel distance {kd} too small to normalize")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    signed = w.signed(data.T) * np.where(data.T == 1, 1.0, -1.0)
    vals = gaussian_gram(pts, data.X, sigma2=sigma2) @ signed / kd
    return float(vals[0]) if single else vals
