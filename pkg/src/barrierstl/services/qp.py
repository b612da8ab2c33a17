"""
Differentiable dense QP.

Solves

    minimize   ½ uᵀQu + Fᵀu
    subject to A_i·u ≥ c_i   for every row i

with a primal active-set method started from a phase-1 feasible point
(scipy's HiGHS linear program), and differentiates the optimizer through
the KKT conditions of the strictly active rows.

``solve_layer`` records one tape node per component of u* whose local
partials are the KKT gradients with respect to F, A and c.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from barrierstl.core.autodiff import Operand, TapeScalar, as_scalar, constant
from barrierstl.core.exceptions import KktDegeneracyError, QpInfeasibleError, QpInputError

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
RELAX_PENALTY = 1e6


@dataclass(frozen=True)
class QpProblem:
    """Dense strictly convex QP with inequality rows A·u ≥ c."""

    Q: np.ndarray
    F: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    c: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        F = np.asarray(self.F, dtype=float).ravel()
        q = F.size
        A = np.asarray(self.A, dtype=float).reshape(-1, q) if np.size(self.A) else np.empty((0, q))
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def q(self) -> int:
        return self.F.size

    @property
    def m(self) -> int:
        return self.c.size

    def with_box(self, u_min: Sequence[float] | None = None, u_max: Sequence[float] | None = None) -> "QpProblem":
        """Append u ≥ u_min and u ≤ u_max as extra rows."""
        eye = np.eye(self.q)
        rows, rhs = [self.A], [self.c]
        if u_min is not None:
            rows.append(eye)
            rhs.append(np.asarray(u_min, dtype=float))
        if u_max is not None:
            rows.append(-eye)
            rhs.append(-np.asarray(u_max, dtype=float))
        return QpProblem(self.Q, self.F, np.vstack(rows), np.concatenate(rhs))

    def validate(self) -> None:
        if self.q < 1:
            raise QpInputError("QP needs at least one decision variable")
        if self.Q.shape != (self.q, self.q):
            raise QpInputError(f"Q has shape {self.Q.shape}, expected {(self.q, self.q)}")
        if self.A.shape != (self.m, self.q):
            raise QpInputError(f"A has shape {self.A.shape}, expected {(self.m, self.q)}")
        if not (np.all(np.isfinite(self.Q)) and np.all(np.isfinite(self.F))):
            raise QpInputError("Q and F must be finite")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.c))):
            raise QpInputError("constraint rows must be finite")
        if not np.allclose(self.Q, self.Q.T, atol=1e-12, rtol=1e-10):
            raise QpInputError("Q must be symmetric")
        try:
            np.linalg.cholesky(self.Q)
        except np.linalg.LinAlgError as exc:
            raise QpInputError("Q must be positive definite") from exc


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    lam: np.ndarray
    active: tuple[int, ...]
    residual: float
    iterations: int = 0
    relaxed: bool = False

    @property
    def strictly_active(self) -> tuple[int, ...]:
        return tuple(i for i in self.active if self.lam[i] > ACTIVE_TOL)


@dataclass(frozen=True)
class QpGradients:
    dQ: np.ndarray
    dF: np.ndarray
    dA: np.ndarray
    dc: np.ndarray


def _kkt_matrix(Q: np.ndarray, A_w: np.ndarray) -> np.ndarray:
    k = A_w.shape[0]
    return np.block([[Q, -A_w.T], [A_w, np.zeros((k, k))]])


def _kkt_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise KktDegeneracyError("KKT matrix of the working set is singular") from exc
    if not np.all(np.isfinite(sol)):
        raise KktDegeneracyError("KKT solve produced non-finite values")
    return sol


def _residual(p: QpProblem, u: np.ndarray, lam: np.ndarray) -> float:
    stationarity = p.Q @ u + p.F - (p.A.T @ lam if p.m else 0.0)
    slack = p.A @ u - p.c if p.m else np.zeros(0)
    primal = float(np.max(np.maximum(-slack, 0.0), initial=0.0))
    complementarity = float(np.max(np.abs(lam * slack), initial=0.0))
    return max(float(np.linalg.norm(stationarity)), primal, complementarity)


def _phase_one(p: QpProblem) -> np.ndarray:
    """Find u with A·u ≥ c by minimizing the largest violation t ≥ 0."""
    cost = np.zeros(p.q + 1)
    cost[-1] = 1.0
    A_ub = -np.hstack([p.A, np.ones((p.m, 1))])
    bounds = [(None, None)] * p.q + [(0.0, None)]
    result = linprog(cost, A_ub=A_ub, b_ub=-p.c, bounds=bounds, method="highs")
    if result.status != 0 or result.x is None:
        raise QpInfeasibleError(f"phase-1 linear program failed: {result.message}", row=-1, violation=float("inf"))
    u = np.asarray(result.x[: p.q], dtype=float)
    violation = p.c - p.A @ u
    worst = int(np.argmax(violation))
    if violation[worst] > FEASIBILITY_TOL * (1.0 + abs(p.c[worst])):
        raise QpInfeasibleError(
            f"constraint rows are infeasible; row {worst} is violated by {violation[worst]:.3e}",
            row=worst,
            violation=float(violation[worst]),
        )
    return u


def _initial_working_set(p: QpProblem, u: np.ndarray) -> list[int]:
    working: list[int] = []
    slack = p.A @ u - p.c
    for i in np.argsort(np.abs(slack), kind="stable"):
        if abs(slack[i]) > 1e-7 * (1.0 + abs(p.c[i])) or len(working) == p.q:
            break
        candidate = p.A[[*working, int(i)]]
        if np.linalg.matrix_rank(candidate) == len(working) + 1:
            working.append(int(i))
    return working


def _active_set(p: QpProblem, u: np.ndarray, working: list[int], max_iter: int) -> tuple[np.ndarray, list[int], int]:
    """Primal active-set iterations from the feasible point ``u``."""
    for iteration in range(1, max_iter + 1):
        g = p.Q @ u + p.F
        A_w = p.A[working]
        sol = _kkt_solve(_kkt_matrix(p.Q, A_w), np.concatenate([-g, np.zeros(len(working))]))
        step, lam = sol[: p.q], sol[p.q :]
        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(u)):
            if not working or lam.min() >= -ACTIVE_TOL:
                return u, working, iteration
            working.pop(int(np.argmin(lam)))
            continue
        alpha, blocking = 1.0, None
        Ap = p.A @ step
        for i in range(p.m):
            if i in working or Ap[i] >= -1e-14:
                continue
            ratio = max((p.c[i] - p.A[i] @ u) / Ap[i], 0.0)
            if ratio < alpha:
                alpha, blocking = ratio, i
        u = u + alpha * step
        if blocking is not None:
            working.append(blocking)
    raise KktDegeneracyError(f"active-set iteration did not converge in {max_iter} steps", iterations=max_iter)


def _solve_relaxed(p: QpProblem, penalty: float) -> QpSolution:
    q, m = p.q, p.m
    Q = np.block([[p.Q, np.zeros((q, m))], [np.zeros((m, q)), penalty * np.eye(m)]])
    F = np.concatenate([p.F, np.zeros(m)])
    A = np.block([[p.A, np.eye(m)], [np.zeros((m, q)), np.eye(m)]])
    c = np.concatenate([p.c, np.zeros(m)])
    inner = solve(QpProblem(Q, F, A, c))
    slack = inner.u[q:]
    logger.warning("QP relaxed: max slack %.3e on row %d", slack.max(), int(np.argmax(slack)))
    lam = inner.lam[:m]
    u = inner.u[:q]
    active = tuple(i for i in inner.active if i < m)
    return QpSolution(u, lam, active, inner.residual, inner.iterations, relaxed=True)


def solve(p: QpProblem, *, relax: bool = False, penalty: float = RELAX_PENALTY) -> QpSolution:
    """Solve ``p``; with ``relax`` an infeasible row set is softened by penalized slacks."""
    p.validate()
    u = np.linalg.solve(p.Q, -p.F)
    if p.m == 0 or np.all(p.A @ u >= p.c - FEASIBILITY_TOL):
        return QpSolution(u, np.zeros(p.m), (), _residual(p, u, np.zeros(p.m)))
    try:
        start = _phase_one(p)
    except QpInfeasibleError:
        if relax:
            return _solve_relaxed(p, penalty)
        raise
    u, working, iterations = _active_set(p, start, _initial_working_set(p, start), max_iter=50 * (p.m + p.q))
    lam = np.zeros(p.m)
    if working:
        A_w = p.A[working]
        sol = _kkt_solve(_kkt_matrix(p.Q, A_w), np.concatenate([-p.F, p.c[working]]))
        u, lam_w = sol[: p.q], sol[p.q :]
        lam[working] = np.maximum(lam_w, 0.0)
    solution = QpSolution(u, lam, tuple(sorted(working)), _residual(p, u, lam), iterations)
    logger.debug("QP solved in %d iterations, active %s", iterations, solution.active)
    return solution


def backward(p: QpProblem, s: QpSolution, dL_du: Sequence[float]) -> QpGradients:
    """Vector-Jacobian product of u*(Q, F, A, c) with ``dL_du``."""
    g = np.asarray(dL_du, dtype=float).ravel()
    if g.size != p.q:
        raise QpInputError(f"dL/du has {g.size} entries, expected {p.q}")
    active = list(s.strictly_active)
    A_a = p.A[active] if active else np.empty((0, p.q))
    w = _kkt_solve(_kkt_matrix(p.Q, A_a).T, np.concatenate([g, np.zeros(len(active))]))
    w_u, w_lam = w[: p.q], w[p.q :]
    dQ = -np.outer(w_u, s.u)
    dA = np.zeros_like(p.A)
    dc = np.zeros(p.m)
    for n, i in enumerate(active):
        dA[i] = s.lam[i] * w_u - w_lam[n] * s.u
        dc[i] = w_lam[n]
    return QpGradients(dQ=0.5 * (dQ + dQ.T), dF=-w_u, dA=dA, dc=dc)


def solve_layer(
    Q: np.ndarray,
    F: Sequence[Operand],
    A: Sequence[Sequence[Operand]],
    c: Sequence[Operand],
    *,
    relax: bool = False,
) -> tuple[list[TapeScalar], QpSolution]:
    """Solve on tape values and record u* as custom nodes depending on F, A and c; Q is treated as data."""
    F_s = [as_scalar(f) for f in F]
    A_s = [[as_scalar(a) for a in row] for row in A]
    c_s = [as_scalar(v) for v in c]
    problem = QpProblem(
        np.asarray(Q, dtype=float),
        np.array([f.value for f in F_s]),
        np.array([[a.value for a in row] for row in A_s]) if A_s else np.empty((0, len(F_s))),
        np.array([v.value for v in c_s]),
    )
    solution = solve(problem, relax=relax)
    if solution.relaxed:
        return [constant(v) for v in solution.u], solution
    tape = next((x.tape for x in (*F_s, *(a for row in A_s for a in row), *c_s) if x.tape is not None), None)
    if tape is None:
        return [constant(v) for v in solution.u], solution
    parents = [*F_s, *(a for row in A_s for a in row), *c_s]
    out = []
    for k in range(problem.q):
        grads = backward(problem, solution, np.eye(problem.q)[k])
        partials = np.concatenate([grads.dF, grads.dA.ravel(), grads.dc])
        out.append(tape.custom("qp", float(solution.u[k]), parents, partials))
    return out, solution
