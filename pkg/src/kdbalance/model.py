"""Core domain types: datasets, balancing weights, and report containers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyGroup,
    InconsistentOutcomes,
    NonBinaryTreatment,
    NonFiniteValue,
)


class WeightScheme(enum.Enum):
    """How a set of balancing weights was produced."""

    KDBC = "KDBC"
    KDM1 = "KDM1"
    ATT_KDB = "ATT_KDB"
    IPW_ATE = "IPW_ATE"
    IPW_ATT = "IPW_ATT"
    UNADJUSTED = "UNADJUSTED"


#: Schemes whose weights estimate the average treatment effect.
ATE_SCHEMES = frozenset(
    {WeightScheme.KDBC, WeightScheme.KDM1, WeightScheme.IPW_ATE, WeightScheme.UNADJUSTED}
)
#: Schemes whose weights estimate the effect on the treated.
ATT_SCHEMES = frozenset(
    {WeightScheme.ATT_KDB, WeightScheme.IPW_ATT, WeightScheme.UNADJUSTED}
)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """An observational sample with optional potential outcomes.

    Attributes:
        X: covariate matrix, shape (N, D).
        T: binary treatment indicator, shape (N,).
        Y: observed outcome, shape (N,).
        Y0: control potential outcome, shape (N,), or None.
        Y1: treated potential outcome, shape (N,), or None.
        n1: number of treated units.
        n0: number of control units.
    """

    X: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    Y0: np.ndarray | None = None
    Y1: np.ndarray | None = None
    n1: int = field(init=False)
    n0: int = field(init=False)

    def __post_init__(self):
        n1 = int(np.sum(self.T == 1))
        object.__setattr__(self, "n1", n1)
        object.__setattr__(self, "n0", int(self.T.shape[0] - n1))

    @property
    def n(self) -> int:
        return int(self.T.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def treated_index(self) -> np.ndarray:
        return np.flatnonzero(self.T == 1)

    def control_index(self) -> np.ndarray:
        return np.flatnonzero(self.T == 0)


def validate_dataset(X, T, Y, Y0=None, Y1=None) -> Dataset:
    """Validate raw arrays and assemble an immutable Dataset.

    Idempotent: feeding a validated dataset's fields back in reproduces it.

    Raises:
        DimensionMismatch: shapes disagree or X is not a 2-D matrix.
        NonBinaryTreatment: a treatment entry is not exactly 0 or 1.
        EmptyGroup: either treatment arm is empty.
        NonFiniteValue: a NaN or infinity appears in any array.
        InconsistentOutcomes: Y disagrees with the selected potential outcome.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got ndim={X.ndim}")
    n = X.shape[0]
    if T.shape != (n,):
        raise DimensionMismatch(f"T has shape {T.shape}, expected ({n},)")
    if Y.shape != (n,):
        raise DimensionMismatch(f"Y has shape {Y.shape}, expected ({n},)")
    if not np.all(np.isfinite(T.astype(float))):
        raise NonFiniteValue("T contains non-finite entries")
    mask01 = (T == 0) | (T == 1)
    if not np.all(mask01):
        bad = np.flatnonzero(~mask01)[0]
        raise NonBinaryTreatment(f"T[{bad}] = {T[bad]!r} is not 0 or 1")
    T = T.astype(int)
    if T.sum() == 0:
        raise EmptyGroup("no treated units")
    if T.sum() == n:
        raise EmptyGroup("no control units")
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue("X contains non-finite entries")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteValue("Y contains non-finite entries")

    if (Y0 is None) != (Y1 is None):
        raise DimensionMismatch("Y0 and Y1 must be supplied together")
    if Y0 is not None:
        Y0 = np.asarray(Y0, dtype=float)
        Y1 = np.asarray(Y1, dtype=float)
        if Y0.shape != (n,) or Y1.shape != (n,):
            raise DimensionMismatch("potential outcomes must have shape (N,)")
        if not (np.all(np.isfinite(Y0)) and np.all(np.isfinite(Y1))):
            raise NonFiniteValue("potential outcomes contain non-finite entries")
        selected = np.where(T == 1, Y1, Y0)
        if not np.array_equal(Y, selected):
            bad = np.flatnonzero(Y != selected)[0]
            raise InconsistentOutcomes(
                f"Y[{bad}] = {Y[bad]} but T[{bad}] = {T[bad]} selects {selected[bad]}"
            )
        Y0 = _frozen(Y0)
        Y1 = _frozen(Y1)
    return Dataset(X=_frozen(X), T=_frozen(T), Y=_frozen(Y), Y0=Y0, Y1=Y1)


@dataclass(frozen=True)
class BalanceWeights:
    """Treated-side weights p and control-side weights q.

    p aligns with treated units in dataset order, q with control units in
    dataset order. ATE-type weights have both sides summing to one; ATT-type
    weights fix p uniform at 1/n1. IPW_ATT leaves q unnormalized.
    """

    p: np.ndarray
    q: np.ndarray
    scheme: WeightScheme
    lam: float = 0.0

    def __post_init__(self):
        p = _frozen(np.asarray(self.p, dtype=float))
        q = _frozen(np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if p.ndim != 1 or q.ndim != 1 or p.size == 0 or q.size == 0:
            raise DimensionMismatch("p and q must be nonempty vectors")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if p.min(initial=np.inf) < -1e-10 or q.min(initial=np.inf) < -1e-10:
            raise ValueError("weights must be nonnegative (tolerance 1e-10)")
        if self.scheme in (WeightScheme.ATT_KDB, WeightScheme.IPW_ATT):
            if not np.allclose(p, 1.0 / p.size, rtol=0, atol=1e-12):
                raise ValueError("ATT weights require p uniform at 1/n1")
        else:
            if abs(p.sum() - 1.0) > 1e-8:
                raise ValueError(f"sum(p) = {p.sum()} must be 1 within 1e-8")
        if self.scheme is not WeightScheme.IPW_ATT:
            if abs(q.sum() - 1.0) > 1e-8:
                raise ValueError(f"sum(q) = {q.sum()} must be 1 within 1e-8")

    def signed(self, T: np.ndarray) -> np.ndarray:
        """Full-sample weight vector in dataset order (p on treated, q on control)."""
        w = np.empty(T.shape[0], dtype=float)
        w[T == 1] = self.p
        w[T == 0] = self.q
        return w


@dataclass(frozen=True)
class EstimateReport:
    """Monte Carlo summary for one estimator."""

    method: str
    estimates: np.ndarray
    truth: float
    bias: float
    pct_bias: float
    sd: float
    rmse: float

    def __post_init__(self):
        object.__setattr__(self, "estimates", _frozen(np.asarray(self.estimates, float)))
        if self.sd < 0 or self.rmse < 0:
            raise ValueError("sd and rmse must be nonnegative")
        if np.isfinite(self.rmse) and self.rmse + 1e-9 < abs(self.bias):
            raise ValueError("rmse cannot fall below |bias|")

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))


@dataclass(frozen=True)
class BalanceReport:
    """Covariate balance summary for one weighting of one dataset."""

    rw: float
    kd: float
    max_asmd: float
    mean_asmd: float
    med_asmd: float
    per_covariate_asmd: np.ndarray
    mean_ks: float
    mean_t: float

    def __post_init__(self):
        asmd = _frozen(np.asarray(self.per_covariate_asmd, float))
        object.__setattr__(self, "per_covariate_asmd", asmd)
        if abs(self.kd - math.sqrt(max(self.rw, 0.0))) > 1e-12:
            raise ValueError("kd must equal sqrt(max(rw, 0))")
        if asmd.size and asmd.min() < 0:
            raise ValueError("ASMD values must be nonnegative")
        if not (-1e-12 <= self.mean_ks <= 1 + 1e-12):
            raise ValueError("mean KS must lie in [0, 1]")
