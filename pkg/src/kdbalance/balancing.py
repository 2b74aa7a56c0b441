"""Build and solve the kernel balancing programs for ATE and ATT weights."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBalance, NumericalBreakdown, SchemeMismatch
from .kernel import Bandwidth, gaussian_gram, information_matrix, median_bandwidth
from .model import ATE_SCHEMES, ATT_SCHEMES, BalanceWeights, Dataset, WeightScheme
from .qp import QPStatus, QuadraticProgram, solve_qp


class Target(enum.Enum):
    ATE = "ATE"
    ATT = "ATT"


class MomentConstraints(enum.Enum):
    NONE = "none"
    FIRST_MOMENT = "first_moment"


@dataclass(frozen=True)
class BalanceScheme:
    """What to balance for: the estimand, hard moment rows, and the ridge lam.

    moment_constraints NONE gives kernel-only weights; FIRST_MOMENT adds one
    equality row per covariate forcing the weighted first moments to agree.
    """

    target: Target
    moment_constraints: MomentConstraints = MomentConstraints.NONE
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")

    @property
    def weight_scheme(self) -> WeightScheme:
        if self.target is Target.ATT:
            return WeightScheme.ATT_KDB
        if self.moment_constraints is MomentConstraints.FIRST_MOMENT:
            return WeightScheme.KDM1
        return WeightScheme.KDBC


def kdbc(lam: float = 0.0) -> BalanceScheme:
    return BalanceScheme(Target.ATE, MomentConstraints.NONE, lam)


def kdm1(lam: float = 0.0) -> BalanceScheme:
    return BalanceScheme(Target.ATE, MomentConstraints.FIRST_MOMENT, lam)


def att_kdb(lam: float = 0.0, moments: MomentConstraints = MomentConstraints.FIRST_MOMENT) -> BalanceScheme:
    return BalanceScheme(Target.ATT, moments, lam)


def _moment_columns(X: np.ndarray) -> list[int]:
    """Covariate columns usable as moment rows: constants are dropped loudly."""
    keep = []
    for d in range(X.shape[1]):
        if np.ptp(X[:, d]) == 0.0:
            warnings.warn(
                f"covariate column {d} is constant; dropped from first-moment constraints",
                stacklevel=3,
            )
        else:
            keep.append(d)
    return keep


def build_ate_problem(data: Dataset, scheme: BalanceScheme, sigma2: float) -> QuadraticProgram:
    """Pose the ATE weight program over x = (p, q), treated block first.

    Objective (1/2) x'(K + lam I)x with K the signed kernel matrix; equality
    rows fix sum(p) = sum(q) = 1 and, under FIRST_MOMENT, the weighted mean of
    every non-constant covariate to agree across groups. All coordinates are
    nonnegative.
    """
    if scheme.target is not Target.ATE:
        raise SchemeMismatch("build_ate_problem requires an ATE scheme")
    n1, n0 = data.n1, data.n0
    K = information_matrix(data, sigma2, lam=scheme.lam).K
    X1 = data.X[data.T == 1]
    X0 = data.X[data.T == 0]
    rows = [
        np.concatenate([np.ones(n1), np.zeros(n0)]),
        np.concatenate([np.zeros(n1), np.ones(n0)]),
    ]
    if scheme.moment_constraints is MomentConstraints.FIRST_MOMENT:
        for d in _moment_columns(data.X):
            rows.append(np.concatenate([X1[:, d], -X0[:, d]]))
    A = np.array(rows)
    b = np.zeros(len(rows))
    b[:2] = 1.0
    return QuadraticProgram(Q=K, Aeq=A, beq=b, nonneg=np.ones(n1 + n0, dtype=bool))


def build_att_problem(data: Dataset, scheme: BalanceScheme, sigma2: float) -> QuadraticProgram:
    """Pose the ATT control-weight program over x = (q, t).

    With p frozen uniform at 1/n1, the control weights minimize
    q'(K0 + lam I)q - 2 (1/n1) 1'K10 q + const. The linear term rides on an
    auxiliary coordinate t pinned to 1 by an equality row, keeping the program
    in pure quadratic form; the Q block stays PSD because the full signed
    kernel matrix is. Under FIRST_MOMENT each control covariate mean is pinned
    to the treated mean.

    Raises:
        InfeasibleBalance: a constant control covariate contradicts the
            treated mean it is constrained to match.
    """
    if scheme.target is not Target.ATT:
        raise SchemeMismatch("build_att_problem requires an ATT scheme")
    n1, n0 = data.n1, data.n0
    X1 = data.X[data.T == 1]
    X0 = data.X[data.T == 0]
    G00 = gaussian_gram(X0, sigma2=sigma2)
    G10 = gaussian_gram(X1, X0, sigma2=sigma2)
    G11 = gaussian_gram(X1, sigma2=sigma2)
    ones1 = np.ones(n1)
    v = G10.T @ ones1 / n1
    c11 = float(ones1 @ G11 @ ones1) / (n1 * n1)
    Q = np.zeros((n0 + 1, n0 + 1))
    Q[:n0, :n0] = G00 + scheme.lam * np.eye(n0)
    Q[:n0, n0] = -v
    Q[n0, :n0] = -v
    Q[n0, n0] = c11
    rows = [np.concatenate([np.ones(n0), [0.0]])]
    rhs = [1.0]
    if scheme.moment_constraints is MomentConstraints.FIRST_MOMENT:
        xbar1 = X1.mean(axis=0)
        for d in _moment_columns(data.X):
            if np.ptp(X0[:, d]) == 0.0:
                # Constant on the control side only: the row duplicates the
                # simplex row, so it must either be dropped or is unsatisfiable.
                const = float(X0[0, d])
                if abs(const - xbar1[d]) <= 1e-9 * max(1.0, abs(const)):
                    warnings.warn(
                        f"control covariate column {d} is constant and matches the "
                        "treated mean; dropped from first-moment constraints",
                        stacklevel=2,
                    )
                    continue
                raise InfeasibleBalance(
                    f"control covariate column {d} is constant at {const} but the "
                    f"treated mean is {xbar1[d]}"
                )
            rows.append(np.concatenate([X0[:, d], [0.0]]))
            rhs.append(float(xbar1[d]))
    rows.append(np.concatenate([np.zeros(n0), [1.0]]))
    rhs.append(1.0)
    A = np.array(rows)
    b = np.array(rhs)
    nonneg = np.concatenate([np.ones(n0, dtype=bool), [False]])
    return QuadraticProgram(Q=Q, Aeq=A, beq=b, nonneg=nonneg)


def _resolve_sigma2(data: Dataset, sigma2) -> float:
    if sigma2 is None:
        return median_bandwidth(data.X).sigma2
    if isinstance(sigma2, Bandwidth):
        return sigma2.sigma2
    return float(sigma2)


def solve_weights_detailed(
    data: Dataset,
    scheme: BalanceScheme,
    sigma2=None,
    warm_start: np.ndarray | None = None,
):
    """Like solve_weights, but also returns the solver solution (for traces)."""
    s2 = _resolve_sigma2(data, sigma2)
    n1, n0 = data.n1, data.n0
    if scheme.target is Target.ATE:
        prob = build_ate_problem(data, scheme, s2)
        if warm_start is None:
            warm_start = np.concatenate([np.full(n1, 1.0 / n1), np.full(n0, 1.0 / n0)])
        sol = solve_qp(prob, warm_start)
        if sol.status is QPStatus.INFEASIBLE:
            raise InfeasibleBalance("no nonnegative weights satisfy the balance constraints")
        if sol.status is not QPStatus.OPTIMAL:
            raise NumericalBreakdown(f"weight solve ended with status {sol.status.value}")
        w = BalanceWeights(
            p=sol.x[:n1], q=sol.x[n1:], scheme=scheme.weight_scheme, lam=scheme.lam
        )
        return w, sol
    # ATT: one-covariate infeasibility is a range check, worth a clear error
    # before any solve.
    if scheme.moment_constraints is MomentConstraints.FIRST_MOMENT and data.d == 1:
        xbar1 = float(data.X[data.T == 1, 0].mean())
        x0 = data.X[data.T == 0, 0]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(x0))))
        if not (x0.min() - tol <= xbar1 <= x0.max() + tol):
            raise InfeasibleBalance(
                f"treated mean {xbar1} lies outside the control range "
                f"[{x0.min()}, {x0.max()}]"
            )
    prob = build_att_problem(data, scheme, s2)
    if warm_start is None:
        warm_start = np.concatenate([np.full(n0, 1.0 / n0), [1.0]])
    sol = solve_qp(prob, warm_start)
    if sol.status is QPStatus.INFEASIBLE:
        raise InfeasibleBalance("no nonnegative control weights satisfy the balance constraints")
    if sol.status is not QPStatus.OPTIMAL:
        raise NumericalBreakdown(f"weight solve ended with status {sol.status.value}")
    w = BalanceWeights(
        p=np.full(n1, 1.0 / n1), q=sol.x[:n0], scheme=scheme.weight_scheme, lam=scheme.lam
    )
    return w, sol


def solve_weights(
    data: Dataset,
    scheme: BalanceScheme,
    sigma2=None,
    warm_start: np.ndarray | None = None,
) -> BalanceWeights:
    """Compute balancing weights for the scheme; bandwidth defaults to the
    median heuristic over the full covariate matrix.

    Raises:
        InfeasibleBalance: the moment constraints admit no nonnegative weights
            (for one covariate, a treated mean outside the control range).
        NumericalBreakdown: the solver could not certify a solution.
    """
    w, _ = solve_weights_detailed(data, scheme, sigma2, warm_start)
    return w


def estimate_ate(data: Dataset, w: BalanceWeights) -> float:
    """Weighted mean difference sum(p * Y_treated) - sum(q * Y_control)."""
    if w.scheme not in ATE_SCHEMES:
        raise SchemeMismatch(f"{w.scheme.value} weights do not target the ATE")
    return float(w.p @ data.Y[data.T == 1] - w.q @ data.Y[data.T == 0])


def estimate_att(data: Dataset, w: BalanceWeights) -> float:
    """Treated-mean outcome minus the q-weighted control outcome."""
    if w.scheme not in ATT_SCHEMES:
        raise SchemeMismatch(f"{w.scheme.value} weights do not target the ATT")
    return float(w.p @ data.Y[data.T == 1] - w.q @ data.Y[data.T == 0])
