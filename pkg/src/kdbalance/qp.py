"""Dense convex quadratic programming with equality constraints and optional
nonnegativity bounds.

    minimize    (1/2) x' Q x
    subject to  Aeq x = beq,   x_i >= 0 for every masked i

Q must be symmetric positive semidefinite. Solving runs a primal active-set
method: a feasible point is found first (equality projection, falling back to
a least-violation auxiliary program), then bound constraints are added and
removed one at a time, each step solving the equality-constrained subproblem
through its KKT system. Every tie breaks toward the smallest index, so the
solver is fully deterministic: identical inputs give identical iterates,
iteration counts, and traces.

Singular-but-PSD Q is handled by an adaptive ridge delta = 1e-10 * trace(Q)/n
escalated tenfold at most six times; if linear algebra still fails the solve
raises NumericalBreakdown.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown, RankDeficient, SingularQ

_FEAS_TOL = 1e-9        # equality residual accepted as feasible
_SNAP_TOL = 1e-13       # masked coordinate snapped to an exact zero
_DUAL_TOL = 1e-10       # multiplier nonnegativity slack at optimality
_STEP_TOL = 1e-12       # relative step length treated as no movement
_KKT_TOL = 1e-8         # certified residual bound for Optimal status
_MAX_ITER = 50_000
_RIDGE_ESCALATIONS = 6
_PHASE1_EPS = 1e-8      # curvature on x in the least-violation program


class QPStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


class _EqpFailure(Exception):
    """An equality-constrained KKT solve failed or returned garbage."""


@dataclass(frozen=True)
class QuadraticProgram:
    """Problem data. Q is symmetrized and all arrays are stored read-only.

    Attributes:
        Q: (n, n) symmetric PSD cost matrix.
        Aeq: (m, n) equality constraint rows, m < n, full row rank.
        beq: (m,) equality right-hand side.
        nonneg: (n,) boolean mask of coordinates constrained to x_i >= 0.
    """

    Q: np.ndarray
    Aeq: np.ndarray
    beq: np.ndarray
    nonneg: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        A = np.asarray(self.Aeq, dtype=float)
        b = np.asarray(self.beq, dtype=float)
        mask = np.asarray(self.nonneg, dtype=bool)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        n = Q.shape[0]
        if A.ndim != 2 or A.shape[1] != n:
            raise DimensionMismatch(f"Aeq must be (m, {n}), got {A.shape}")
        m = A.shape[0]
        if m >= n:
            raise DimensionMismatch(f"need m < n, got m={m}, n={n}")
        if b.shape != (m,):
            raise DimensionMismatch(f"beq must be ({m},), got {b.shape}")
        if mask.shape != (n,):
            raise DimensionMismatch(f"nonneg must be ({n},), got {mask.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10:
            raise ValueError("Q must be symmetric within 1e-10")
        if m > 0:
            svals = np.linalg.svd(A, compute_uv=False)
            if svals[-1] <= 1e-10 * max(1.0, svals[0]):
                raise RankDeficient(
                    f"Aeq rows are linearly dependent (smallest singular value {svals[-1]:.3e})"
                )
        Q = (Q + Q.T) / 2.0
        for name, arr in (("Q", Q), ("Aeq", A), ("beq", b), ("nonneg", mask)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.Aeq.shape[0]


@dataclass(frozen=True)
class QPSolution:
    """Solver output.

    objective is (1/2) x'Qx. dual_eq holds the equality multipliers nu and
    dual_ineq the bound multipliers lambda (zero off the mask). kkt_residual
    is the max-norm over stationarity Qx - lambda + Aeq'nu, equality and bound
    violation, complementarity, and dual feasibility; it is <= 1e-8 whenever
    status is Optimal. trace rows are (iteration, objective, equality residual,
    bound violation) over the feasible phase, with objective non-increasing.
    """

    x: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    objective: float
    status: QPStatus
    iterations: int
    kkt_residual: float
    trace: tuple = ()

    def __post_init__(self):
        for name in ("x", "dual_eq", "dual_ineq"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class KKTResiduals:
    """Component-wise first-order optimality residuals."""

    stationarity: float
    primal_eq: float
    primal_bound: float
    complementarity: float
    dual_feas: float

    def max(self) -> float:
        return max(
            self.stationarity,
            self.primal_eq,
            self.primal_bound,
            self.complementarity,
            self.dual_feas,
        )


def _residual_parts(Q, A, b, mask, x, nu, lam) -> KKTResiduals:
    stat = float(np.max(np.abs(Q @ x - lam + A.T @ nu), initial=0.0))
    peq = float(np.max(np.abs(A @ x - b), initial=0.0))
    pbound = float(max(0.0, -np.min(x[mask], initial=0.0)))
    comp = float(np.max(np.abs(lam * x), initial=0.0))
    dfeas = float(max(0.0, -np.min(lam, initial=0.0)))
    return KKTResiduals(stat, peq, pbound, comp, dfeas)


def kkt_residuals(prob: QuadraticProgram, sol: QPSolution) -> KKTResiduals:
    """Recompute the optimality residuals of a solution against its problem."""
    return _residual_parts(
        prob.Q, prob.Aeq, prob.beq, prob.nonneg, sol.x, sol.dual_eq, sol.dual_ineq
    )


def dual_objective(prob: QuadraticProgram, dual_ineq: np.ndarray, dual_eq: np.ndarray) -> float:
    """Lagrangian dual value g(lambda, nu) = -(1/2) u'Q^{-1}u - nu'beq, u = lambda - Aeq'nu.

    Requires strictly positive definite Q (solve with a ridge first otherwise).
    Weak duality holds for any lambda >= 0; at an exact KKT point the value
    meets the primal objective.

    Raises:
        SingularQ: Q has no Cholesky factor.
    """
    lam = np.asarray(dual_ineq, dtype=float)
    nu = np.asarray(dual_eq, dtype=float)
    try:
        np.linalg.cholesky(prob.Q)
    except np.linalg.LinAlgError as exc:
        raise SingularQ("Q is not positive definite; dual value undefined") from exc
    u = lam - prob.Aeq.T @ nu
    return float(-0.5 * (u @ np.linalg.solve(prob.Q, u)) - nu @ prob.beq)


# -- equality-constrained subproblem -----------------------------------------


def _eqp_solve(Q, c, A, b, free):
    """Solve min (1/2)x'Qx + c'x st Ax=b with x zero off `free`.

    Returns (z, nu) with z the full-length primal point. Raises _EqpFailure
    when the KKT system is singular or the solve residual is untrustworthy.
    """
    F = np.flatnonzero(free)
    nf = F.size
    m = A.shape[0]
    M = np.zeros((nf + m, nf + m))
    M[:nf, :nf] = Q[np.ix_(F, F)]
    AF = A[:, F]
    M[:nf, nf:] = AF.T
    M[nf:, :nf] = AF
    rhs = np.concatenate([-c[F], b])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise _EqpFailure("singular KKT system") from exc
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)), float(np.max(np.abs(sol), initial=0.0)))
    resid = np.max(np.abs(M @ sol - rhs), initial=0.0)
    if resid > 1e-10 * scale:
        # one round of iterative refinement before giving up
        try:
            sol = sol + np.linalg.solve(M, rhs - M @ sol)
        except np.linalg.LinAlgError as exc:
            raise _EqpFailure("refinement failed") from exc
        resid = np.max(np.abs(M @ sol - rhs), initial=0.0)
        if resid > 1e-7 * scale:
            raise _EqpFailure(f"KKT solve residual {resid:.3e} too large")
    if not np.all(np.isfinite(sol)):
        raise _EqpFailure("non-finite KKT solution")
    z = np.zeros(Q.shape[0])
    z[F] = sol[:nf]
    nu = sol[nf:]
    return z, nu


# -- feasible starting point --------------------------------------------------


def _project_eq(A, b, y, pinned=None):
    """Euclidean projection of y onto {x : Ax = b, x_pinned = 0}.

    Returns None when the pinned system is inconsistent (residual stays
    above tolerance).
    """
    x = np.array(y, dtype=float)
    if pinned is not None:
        x[pinned] = 0.0
    if A.shape[0] == 0:
        return x
    free = np.ones(x.size, dtype=bool) if pinned is None else ~pinned
    AF = A[:, free]
    r = A @ x - b
    t = np.linalg.lstsq(AF @ AF.T, r, rcond=None)[0]
    x[free] -= AF.T @ t
    if np.max(np.abs(A @ x - b), initial=0.0) > _FEAS_TOL * max(1.0, np.max(np.abs(b), initial=0.0)):
        return None
    return x


def _phase1(A, b, mask, warm, budget):
    """Find a point satisfying Ax=b and the bound mask.

    Returns (x0 or None, iterations_used, least_violation_point). x0 is None
    when no nonnegative-orthant point satisfies the equalities.
    """
    n = A.shape[1]
    m = A.shape[0]
    if warm is not None:
        cand = np.array(warm, dtype=float)
    elif m > 0:
        cand = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        cand = np.zeros(n)
    x = _project_eq(A, b, cand)
    if x is not None and np.min(x[mask], initial=0.0) >= -1e-12:
        x[mask & (np.abs(x) <= _SNAP_TOL)] = 0.0
        np.maximum(x, 0.0, where=mask, out=x)
        return x, 0, x
    # Least-violation program: min (eps/2)||x - g||^2 + (1/2)||s||^2 over
    # Ax + s = b, masked x >= 0. Feasible for any x, so the active-set engine
    # can start from scratch; the slack optimum certifies (in)feasibility.
    g = np.array(cand) if x is None else np.array(x)
    np.maximum(g, 0.0, where=mask, out=g)
    s0 = b - A @ g
    Q_aux = np.diag(np.concatenate([np.full(n, _PHASE1_EPS), np.ones(m)]))
    c_aux = np.concatenate([-_PHASE1_EPS * g, np.zeros(m)])
    A_aux = np.hstack([A, np.eye(m)])
    mask_aux = np.concatenate([mask, np.zeros(m, dtype=bool)])
    z0 = np.concatenate([g, s0])
    z, _, _, iters, capped, _ = _active_set(
        Q_aux, c_aux, A_aux, b, mask_aux, z0, budget, collect_trace=False
    )
    s_hat = z[n:]
    if capped or np.max(np.abs(s_hat), initial=0.0) > 1e-6 * (1.0 + np.max(np.abs(b), initial=0.0)):
        xh = z[:n]
        np.maximum(xh, 0.0, where=mask, out=xh)
        return None, iters, xh
    xh = z[:n]
    # Pin the discovered face and reproject exactly; repeat while the exact
    # projection uncovers new (tiny) bound violations.
    pinned = mask & (xh <= 1e-11)
    for _ in range(6):
        proj = _project_eq(A, b, xh, pinned)
        if proj is None:
            return None, iters, np.maximum(xh, 0.0)
        worst = np.min(proj[mask], initial=0.0)
        if worst >= -1e-12:
            proj[mask & (np.abs(proj) <= _SNAP_TOL)] = 0.0
            np.maximum(proj, 0.0, where=mask, out=proj)
            return proj, iters, proj
        pinned = pinned | (mask & (proj <= 1e-11))
        xh = proj
    return None, iters, np.maximum(xh, 0.0)


# -- active-set iteration ------------------------------------------------------


def _active_set(Q, c, A, b, mask, x0, budget, collect_trace=True):
    """Run the primal active-set loop from a feasible x0.

    Returns (x, nu, lam, iterations, capped, trace). Raises _EqpFailure when a
    KKT solve breaks down, signalling the caller to escalate its ridge.
    """
    n = Q.shape[0]
    x = np.array(x0, dtype=float)
    in_w = mask & (x <= _SNAP_TOL)
    x[in_w] = 0.0
    nu = np.zeros(A.shape[0])
    trace = []

    def record(it):
        if collect_trace:
            obj = 0.5 * float(x @ Q @ x) + float(c @ x)
            eq = float(np.max(np.abs(A @ x - b), initial=0.0))
            bd = float(max(0.0, -np.min(x[mask], initial=0.0)))
            trace.append((it, obj, eq, bd))

    record(0)
    it = 0
    while it < budget:
        it += 1
        z, nu = _eqp_solve(Q, c, A, b, ~in_w)
        d = z - x
        if np.max(np.abs(d), initial=0.0) <= _STEP_TOL * (1.0 + np.max(np.abs(x), initial=0.0)):
            # Converged on this face: check multipliers of the bound set.
            mu = Q @ z + c + A.T @ nu
            w_idx = np.flatnonzero(in_w)
            if w_idx.size == 0 or np.min(mu[w_idx]) >= -_DUAL_TOL:
                lam = np.zeros(n)
                if w_idx.size:
                    lam[w_idx] = np.maximum(mu[w_idx], 0.0)
                x = z
                x[in_w] = 0.0
                record(it)
                return x, nu, lam, it, False, trace
            # Release the most negative multiplier (ties: smallest index).
            drop = w_idx[int(np.argmin(mu[w_idx]))]
            in_w[drop] = False
            record(it)
            continue
        # Step toward z, stopping at the first masked coordinate driven to 0.
        blocking = mask & ~in_w & (d < -1e-13)
        alpha = 1.0
        blocker = -1
        if np.any(blocking):
            idx = np.flatnonzero(blocking)
            ratios = np.maximum(x[idx], 0.0) / -d[idx]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha = float(ratios[k])
                blocker = int(idx[k])
        if blocker >= 0:
            x = x + alpha * d
            x[blocker] = 0.0
            in_w[blocker] = True
        else:
            x = z
            x[in_w] = 0.0
        record(it)
    return x, nu, np.zeros(n), it, True, trace


# -- public solve --------------------------------------------------------------


def solve_qp(prob: QuadraticProgram, warm_start: np.ndarray | None = None) -> QPSolution:
    """Minimize (1/2) x'Qx over the problem's equality and bound constraints.

    warm_start, when given, seeds the feasibility phase (it does not need to
    be feasible). The returned status is Optimal with kkt_residual <= 1e-8,
    MaxIterations after 50,000 iterations, or Infeasible when no point
    satisfies the constraints.

    Raises:
        NumericalBreakdown: KKT systems kept failing after the ridge ladder.
    """
    Q, A, b, mask = prob.Q, prob.Aeq, prob.beq, prob.nonneg
    n = prob.n
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        if warm_start.shape != (n,):
            raise DimensionMismatch(f"warm_start must be ({n},), got {warm_start.shape}")

    x0, used, least_viol = _phase1(A, b, mask, warm_start, _MAX_ITER)
    if x0 is None:
        x = least_viol
        zeros = np.zeros(n)
        parts = _residual_parts(Q, A, b, mask, x, np.zeros(prob.m), zeros)
        return QPSolution(
            x=x,
            dual_eq=np.zeros(prob.m),
            dual_ineq=zeros,
            objective=0.5 * float(x @ Q @ x),
            status=QPStatus.INFEASIBLE,
            iterations=used,
            kkt_residual=parts.max(),
        )

    delta0 = 1e-10 * float(np.trace(Q)) / n
    if delta0 <= 0:
        delta0 = 1e-10
    ridges = [0.0] + [delta0 * 10**k for k in range(_RIDGE_ESCALATIONS + 1)]
    c = np.zeros(n)
    total_iters = used
    last_error: Exception | None = None
    for delta in ridges:
        Qd = Q if delta == 0.0 else Q + delta * np.eye(n)
        budget = _MAX_ITER - total_iters
        if budget <= 0:
            break
        try:
            x, nu, lam, iters, capped, trace = _active_set(Qd, c, A, b, mask, x0, budget)
        except _EqpFailure as exc:
            last_error = exc
            continue
        total_iters += iters
        if capped:
            parts = _residual_parts(Q, A, b, mask, x, nu, np.zeros(n))
            return QPSolution(
                x=x,
                dual_eq=nu,
                dual_ineq=np.zeros(n),
                objective=0.5 * float(x @ Q @ x),
                status=QPStatus.MAX_ITERATIONS,
                iterations=total_iters,
                kkt_residual=parts.max(),
                trace=tuple(trace),
            )
        if delta > 0.0:
            # The ridged face usually carries an exact solution of the
            # original problem; try to recover it before settling.
            try:
                free = ~(mask & (x <= _SNAP_TOL))
                z2, nu2 = _eqp_solve(Q, c, A, b, free)
                if np.min(z2[mask], initial=0.0) >= -1e-10:
                    mu2 = Q @ z2 + A.T @ nu2
                    lam2 = np.zeros(n)
                    w_idx = np.flatnonzero(~free)
                    lam2[w_idx] = np.maximum(mu2[w_idx], 0.0)
                    if np.min(mu2[w_idx], initial=0.0) >= -_DUAL_TOL:
                        parts2 = _residual_parts(Q, A, b, mask, z2, nu2, lam2)
                        parts1 = _residual_parts(Q, A, b, mask, x, nu, lam)
                        if parts2.max() <= parts1.max():
                            x, nu, lam = z2, nu2, lam2
            except _EqpFailure:
                pass
        x = np.array(x)
        x[mask & (x < 0)] = 0.0
        parts = _residual_parts(Q, A, b, mask, x, nu, lam)
        resid = parts.max()
        if resid <= _KKT_TOL:
            return QPSolution(
                x=x,
                dual_eq=nu,
                dual_ineq=lam,
                objective=0.5 * float(x @ Q @ x),
                status=QPStatus.OPTIMAL,
                iterations=total_iters,
                kkt_residual=resid,
                trace=tuple(trace),
            )
        last_error = _EqpFailure(f"residual {resid:.3e} above {_KKT_TOL} at ridge {delta:.3e}")
    raise NumericalBreakdown(
        f"QP solve failed after ridge escalation: {last_error}"
    )


def trace_text(sol: QPSolution) -> str:
    """Render the iteration trace as tab-delimited text."""
    lines = ["iteration\tobjective\teq_residual\tbound_violation"]
    for it, obj, eq, bd in sol.trace:
        lines.append(f"{it}\t{obj!r}\t{eq!r}\t{bd!r}")
    return "\n".join(lines) + "\n"
