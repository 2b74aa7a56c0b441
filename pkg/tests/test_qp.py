import numpy as np
import pytest

from kdbalance import (
    QPSolution,
    QPStatus,
    QuadraticProgram,
    RankDeficient,
    SingularQ,
    dual_objective,
    kkt_residuals,
    solve_qp,
    trace_text,
)


def _simplex_problem(Q):
    n = Q.shape[0]
    return QuadraticProgram(
        Q=Q, Aeq=np.ones((1, n)), beq=np.array([1.0]), nonneg=np.ones(n, dtype=bool)
    )


def _random_psd_problem(rng, n=12, m=2, definite=True):
    M = rng.standard_normal((n, n))
    Q = M @ M.T / n
    if definite:
        Q += 0.1 * np.eye(n)
    A = rng.standard_normal((m, n))
    # rhs from a strictly positive point keeps the problem feasible
    x_feas = rng.random(n) + 0.1
    b = A @ x_feas
    return QuadraticProgram(Q=Q, Aeq=A, beq=b, nonneg=np.ones(n, dtype=bool))


def test_analytic_diagonal_simplex():
    # min (x1^2 + 2 x2^2)/2 on the simplex: x = (2/3, 1/3), nu = -2/3
    sol = solve_qp(_simplex_problem(np.diag([1.0, 2.0])))
    assert sol.status is QPStatus.OPTIMAL
    np.testing.assert_allclose(sol.x, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)
    np.testing.assert_allclose(sol.dual_eq, [-2.0 / 3.0], atol=1e-12)
    assert sol.objective == pytest.approx(1.0 / 3.0, abs=1e-12)
    np.testing.assert_allclose(sol.dual_ineq, 0.0, atol=1e-12)


def test_active_bound_at_optimum():
    # strong pull toward the first coordinate forces x2 to its bound
    Q = np.array([[1.0, 0.0], [0.0, 1.0]])
    prob = QuadraticProgram(
        Q=Q,
        Aeq=np.array([[1.0, -1.0]]),
        beq=np.array([2.0]),  # x1 - x2 = 2 with x >= 0 -> x = (2, 0)
        nonneg=np.ones(2, dtype=bool),
    )
    sol = solve_qp(prob)
    assert sol.status is QPStatus.OPTIMAL
    np.testing.assert_allclose(sol.x, [2.0, 0.0], atol=1e-10)
    assert sol.dual_ineq[1] > 0  # bound is active with positive multiplier


def test_kkt_residual_certified():
    rng = np.random.default_rng(10)
    for trial in range(25):
        prob = _random_psd_problem(rng, n=int(rng.integers(5, 20)), m=int(rng.integers(1, 4)))
        sol = solve_qp(prob)
        assert sol.status is QPStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-8
        parts = kkt_residuals(prob, sol)
        assert parts.max() == pytest.approx(sol.kkt_residual, abs=1e-15)
        assert parts.primal_eq <= 1e-8
        assert parts.stationarity <= 1e-8


def test_weak_and_strong_duality():
    rng = np.random.default_rng(11)
    for trial in range(25):
        prob = _random_psd_problem(rng, n=10, m=2)
        sol = solve_qp(prob)
        g = dual_objective(prob, sol.dual_ineq, sol.dual_eq)
        assert g <= sol.objective + 1e-7          # weak duality
        assert sol.objective - g <= 1e-6 * (1.0 + abs(sol.objective))  # strong at KKT


def test_dual_objective_needs_definite_q():
    prob = _simplex_problem(np.diag([1.0, 2.0]))
    singular = QuadraticProgram(
        Q=np.array([[1.0, 1.0], [1.0, 1.0]]),
        Aeq=prob.Aeq,
        beq=prob.beq,
        nonneg=prob.nonneg,
    )
    with pytest.raises(SingularQ):
        dual_objective(singular, np.zeros(2), np.zeros(1))


def test_determinism_bitwise():
    rng = np.random.default_rng(12)
    prob = _random_psd_problem(rng, n=15, m=3)
    a = solve_qp(prob)
    b = solve_qp(prob)
    assert a.iterations == b.iterations
    assert a.status is b.status
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.dual_eq, b.dual_eq)
    assert a.trace == b.trace


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(13)
    prob = _random_psd_problem(rng, n=12, m=2)
    cold = solve_qp(prob)
    warm = solve_qp(prob, warm_start=cold.x)
    assert warm.status is QPStatus.OPTIMAL
    np.testing.assert_allclose(warm.x, cold.x, atol=1e-9)
    # restarting from the answer should converge at least as fast
    assert warm.iterations <= cold.iterations


def test_trace_monotone_objective():
    rng = np.random.default_rng(14)
    for trial in range(10):
        prob = _random_psd_problem(rng, n=14, m=2)
        sol = solve_qp(prob)
        objs = [row[1] for row in sol.trace]
        eqs = [row[2] for row in sol.trace]
        assert len(objs) >= 1
        for earlier, later in zip(objs, objs[1:]):
            assert later <= earlier + 1e-10
        scale = 1.0 + float(np.max(np.abs(prob.beq)))
        assert max(eqs) <= 1e-8 * scale
        its = [row[0] for row in sol.trace]
        assert its == sorted(its)


def test_trace_text_format():
    sol = solve_qp(_simplex_problem(np.diag([1.0, 2.0])))
    text = trace_text(sol)
    lines = text.strip().split("\n")
    assert lines[0] == "iteration\tobjective\teq_residual\tbound_violation"
    assert len(lines) == len(sol.trace) + 1
    first = lines[1].split("\t")
    assert int(first[0]) == sol.trace[0][0]
    assert float(first[1]) == sol.trace[0][1]  # repr round-trips exactly


def test_singular_psd_q_solved_via_ridge():
    # rank-1 PSD Q: minimizer set is a face; a certified point must come back
    v = np.array([1.0, 2.0, 3.0])
    Q = np.outer(v, v)
    prob = _simplex_problem(Q)
    sol = solve_qp(prob)
    assert sol.status is QPStatus.OPTIMAL
    assert sol.kkt_residual <= 1e-8
    assert abs(sol.x.sum() - 1.0) <= 1e-9
    assert sol.x.min() >= 0.0


def test_zero_q_all_feasible():
    prob = _simplex_problem(np.zeros((3, 3)))
    sol = solve_qp(prob)
    assert sol.status is QPStatus.OPTIMAL
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


def test_infeasible_detected():
    # sum x = -1 with x >= 0 is impossible
    prob = QuadraticProgram(
        Q=np.eye(3),
        Aeq=np.ones((1, 3)),
        beq=np.array([-1.0]),
        nonneg=np.ones(3, dtype=bool),
    )
    sol = solve_qp(prob)
    assert sol.status is QPStatus.INFEASIBLE


def test_infeasible_two_row_contradiction():
    # x1 + x2 = 1 and x1 + x2 + 2x3 = 0 force x3 < 0
    prob = QuadraticProgram(
        Q=np.eye(3),
        Aeq=np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 2.0]]),
        beq=np.array([1.0, 0.0]),
        nonneg=np.ones(3, dtype=bool),
    )
    sol = solve_qp(prob)
    assert sol.status is QPStatus.INFEASIBLE


def test_unbounded_coordinates_allowed_when_unmasked():
    # free coordinate may go negative
    prob = QuadraticProgram(
        Q=np.eye(2),
        Aeq=np.array([[1.0, 1.0]]),
        beq=np.array([-3.0]),
        nonneg=np.array([True, False]),
    )
    sol = solve_qp(prob)
    assert sol.status is QPStatus.OPTIMAL
    assert sol.x[0] >= -1e-12
    assert sol.x[1] == pytest.approx(-3.0, abs=1e-9)


def test_rank_deficient_rows_rejected():
    with pytest.raises(RankDeficient):
        QuadraticProgram(
            Q=np.eye(3),
            Aeq=np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]),
            beq=np.array([1.0, 2.0]),
            nonneg=np.ones(3, dtype=bool),
        )


def test_asymmetric_q_rejected():
    with pytest.raises(ValueError):
        QuadraticProgram(
            Q=np.array([[1.0, 0.5], [0.0, 1.0]]),
            Aeq=np.ones((1, 2)),
            beq=np.array([1.0]),
            nonneg=np.ones(2, dtype=bool),
        )


def test_shape_validation():
    from kdbalance import DimensionMismatch

    with pytest.raises(DimensionMismatch):
        QuadraticProgram(
            Q=np.eye(3), Aeq=np.ones((3, 3)), beq=np.ones(3), nonneg=np.ones(3, dtype=bool)
        )  # m >= n
    with pytest.raises(DimensionMismatch):
        QuadraticProgram(
            Q=np.eye(3), Aeq=np.ones((1, 2)), beq=np.ones(1), nonneg=np.ones(3, dtype=bool)
        )


def test_solution_arrays_readonly():
    sol = solve_qp(_simplex_problem(np.diag([1.0, 2.0])))
    with pytest.raises(ValueError):
        sol.x[0] = 5.0


def test_large_active_set_walk():
    # heavily tilted diagonal: optimum pins all but the cheapest coordinate
    n = 30
    Q = np.diag(np.arange(1.0, n + 1.0))
    sol = solve_qp(_simplex_problem(Q))
    assert sol.status is QPStatus.OPTIMAL
    # closed form: x_i proportional to 1/q_i over the support; here the
    # unconstrained simplex solution is already interior
    expect = (1.0 / np.diag(Q)) / (1.0 / np.diag(Q)).sum()
    np.testing.assert_allclose(sol.x, expect, atol=1e-9)
