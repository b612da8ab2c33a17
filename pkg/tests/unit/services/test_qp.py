"""
Tests for the differentiable QP layer.

Tests verify:
- Solutions agree with a brute-force enumeration of KKT points
- Backward gradients match central differences on nondegenerate instances
- Infeasible rows raise, or are relaxed on request
- Input validation and the tape layer
"""

from itertools import combinations

import numpy as np
import pytest

from barrierstl.core.autodiff import Tape, constant
from barrierstl.core.exceptions import QpInfeasibleError, QpInputError
from barrierstl.services.qp import QpProblem, backward, solve, solve_layer


def _random_problem(rng, q=None, m=None):
    q = q or int(rng.integers(1, 5))
    m = int(rng.integers(0, 7)) if m is None else m
    M = rng.normal(size=(q, q))
    Q = M @ M.T + 0.5 * np.eye(q)
    F = rng.normal(scale=2.0, size=q)
    A = rng.normal(size=(m, q))
    u0 = rng.normal(size=q)
    c = A @ u0 - np.abs(rng.normal(size=m))
    return QpProblem(Q, F, A, c)


def _brute_force(p: QpProblem) -> np.ndarray:
    """The unique KKT point, found by trying every linearly independent row subset."""
    for k in range(min(p.m, p.q) + 1):
        for rows in combinations(range(p.m), k):
            A_w = p.A[list(rows)]
            if k and np.linalg.matrix_rank(A_w) < k:
                continue
            K = np.block([[p.Q, -A_w.T], [A_w, np.zeros((k, k))]])
            sol = np.linalg.solve(K, np.concatenate([-p.F, p.c[list(rows)]]))
            u, lam = sol[: p.q], sol[p.q :]
            if np.all(lam >= -1e-10) and np.all(p.A @ u >= p.c - 1e-10):
                return u
    raise AssertionError("no KKT point found")


def _nondegenerate(p: QpProblem, margin: float = 1e-4) -> bool:
    s = solve(p)
    slack = p.A @ s.u - p.c
    active = set(s.strictly_active)
    return all(s.lam[i] > margin if i in active else slack[i] > margin for i in range(p.m))


# ============================================================================
# Forward
# ============================================================================


@pytest.mark.unit
def test_solutions_match_brute_force_enumeration(rng):
    for _ in range(300):
        p = _random_problem(rng)
        s = solve(p)
        np.testing.assert_allclose(s.u, _brute_force(p), atol=1e-6)
        assert s.residual < 1e-7
        assert np.all(s.lam >= 0.0)


@pytest.mark.unit
def test_unconstrained_minimizer_is_returned_directly():
    p = QpProblem(np.diag([2.0, 4.0]), np.array([-2.0, 4.0]), np.array([[1.0, 0.0]]), np.array([-10.0]))
    s = solve(p)
    np.testing.assert_allclose(s.u, [1.0, -1.0])
    assert s.active == ()
    assert s.lam.tolist() == [0.0]


@pytest.mark.unit
def test_box_rows_clip_the_minimizer():
    p = QpProblem(np.eye(2), np.array([-5.0, 0.0])).with_box(u_max=[1.0, 1.0])
    s = solve(p)
    np.testing.assert_allclose(s.u, [1.0, 0.0], atol=1e-10)
    assert s.strictly_active == (0,)
    assert s.lam[0] == pytest.approx(4.0)


@pytest.mark.unit
def test_infeasible_rows_raise_with_the_worst_row():
    p = QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 0.0]))
    with pytest.raises(QpInfeasibleError) as info:
        solve(p)
    assert info.value.details["row"] in (0, 1)
    assert info.value.details["violation"] == pytest.approx(0.5, abs=1e-6)
    assert info.value.exit_code == 3


@pytest.mark.unit
def test_relaxed_solve_splits_the_conflict():
    p = QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 0.0]))
    s = solve(p, relax=True)
    assert s.relaxed
    np.testing.assert_allclose(s.u, [0.5, 0.0], atol=1e-5)


@pytest.mark.unit
@pytest.mark.parametrize(
    "problem",
    [
        QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2)),
        QpProblem(np.diag([1.0, -1.0]), np.zeros(2)),
        QpProblem(np.eye(3), np.zeros(2)),
        QpProblem(np.eye(2), np.zeros(2), np.eye(2), np.zeros(3)),
        QpProblem(np.eye(2), np.array([np.nan, 0.0])),
        QpProblem(np.eye(2), np.zeros(2), np.eye(2), np.array([np.inf, 0.0])),
        QpProblem(np.empty((0, 0)), np.empty(0)),
    ],
)
def test_invalid_problems_are_rejected(problem):
    with pytest.raises(QpInputError):
        solve(problem)


# ============================================================================
# Backward
# ============================================================================


@pytest.mark.unit
def test_backward_matches_finite_differences(rng, assert_helpers):
    checked = 0
    while checked < 40:
        p = _random_problem(rng, m=int(rng.integers(1, 6)))
        if not _nondegenerate(p):
            continue
        w = rng.normal(size=p.q)
        grads = backward(p, solve(p), w)

        def loss(Q=p.Q, F=p.F, A=p.A, c=p.c, w=w):
            return float(w @ solve(QpProblem(Q, F, A, c)).u)

        dF = assert_helpers.finite_difference(lambda F: loss(F=F), p.F)
        dA = assert_helpers.finite_difference(lambda A: loss(A=A), p.A)
        dc = assert_helpers.finite_difference(lambda c: loss(c=c), p.c)
        assert assert_helpers.rel_err(grads.dF, dF) < 1e-4
        assert assert_helpers.rel_err(grads.dA, dA) < 1e-4
        assert assert_helpers.rel_err(grads.dc, dc) < 1e-4

        h = 1e-6
        for i in range(p.q):
            for j in range(i, p.q):
                E = np.zeros_like(p.Q)
                E[i, j] = E[j, i] = 1.0
                numeric = (loss(Q=p.Q + h * E) - loss(Q=p.Q - h * E)) / (2 * h)
                analytic = grads.dQ[i, i] if i == j else 2.0 * grads.dQ[i, j]
                assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-6)
        checked += 1


@pytest.mark.unit
def test_inactive_rows_receive_no_gradient():
    p = QpProblem(np.eye(2), np.array([-5.0, 0.0]), np.array([[-1.0, 0.0], [0.0, 1.0]]), np.array([-1.0, -3.0]))
    grads = backward(p, solve(p), [1.0, 1.0])
    assert grads.dA[1].tolist() == [0.0, 0.0]
    assert grads.dc[1] == 0.0
    assert grads.dF[0] == pytest.approx(0.0, abs=1e-12)
    assert grads.dF[1] == pytest.approx(-1.0)


@pytest.mark.unit
def test_backward_rejects_wrong_width():
    p = QpProblem(np.eye(2), np.zeros(2))
    with pytest.raises(QpInputError):
        backward(p, solve(p), [1.0])


# ============================================================================
# Tape layer
# ============================================================================


@pytest.mark.unit
def test_layer_records_kkt_partials_on_the_tape(rng):
    p = QpProblem(np.eye(2), np.array([-3.0, -1.0]), np.array([[-1.0, -1.0], [1.0, 0.0]]), np.array([-2.0, -5.0]))
    tape = Tape()
    F = [tape.leaf(v) for v in p.F]
    A = [[tape.leaf(v) for v in row] for row in p.A]
    c = [tape.leaf(v) for v in p.c]
    u, solution = solve_layer(p.Q, F, A, c)
    np.testing.assert_allclose([v.value for v in u], solution.u)
    w = rng.normal(size=2)
    grad = tape.backward(w[0] * u[0] + w[1] * u[1])
    expected = backward(p, solution, w)
    np.testing.assert_allclose(grad.wrt(F), expected.dF, atol=1e-12)
    np.testing.assert_allclose([grad.wrt(row) for row in A], expected.dA, atol=1e-12)
    np.testing.assert_allclose(grad.wrt(c), expected.dc, atol=1e-12)


@pytest.mark.unit
def test_layer_on_constants_and_relaxed_solutions_stays_off_tape():
    u, _ = solve_layer(np.eye(2), [constant(-1.0), 0.0], [], [])
    assert all(v.is_constant for v in u)
    assert [v.value for v in u] == pytest.approx([1.0, 0.0])

    tape = Tape()
    F = [tape.leaf(0.0), tape.leaf(0.0)]
    u, solution = solve_layer(np.eye(2), F, [[1.0, 0.0], [-1.0, 0.0]], [1.0, 0.0], relax=True)
    assert solution.relaxed
    assert all(v.is_constant for v in u)
