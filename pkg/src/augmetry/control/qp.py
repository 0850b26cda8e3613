"""Dense convex quadratic programming with an active-set method.

Solves  min 0.5 x'Hx + g'x  subject to  A_eq x = b_eq  and
lb <= A_in x <= ub, for a symmetric positive semidefinite H.  Active
inequalities are enforced as equalities through a KKT system; rows enter on
their largest violation and leave on the most negative multiplier.  All
tie-breaking is by index order, so solutions are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Malformed

SYM_TOL = 1e-12
PSD_TOL = -1e-9


def _as_matrix(a, cols, name):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return a.reshape(0, cols)
    if a.ndim != 2 or a.shape[1] != cols:
        raise Malformed(f"{name} must have {cols} columns, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class QpProblem:
    """Immutable QP data; validated on construction."""

    hessian: np.ndarray
    gradient: np.ndarray
    eq_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    eq_rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    ineq_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise Malformed(f"hessian must be square, got {h.shape}")
        n = h.shape[0]
        if np.max(np.abs(h - h.T), initial=0.0) > SYM_TOL:
            raise Malformed("hessian is not symmetric")
        if n and np.linalg.eigvalsh(h).min() < PSD_TOL:
            raise Malformed("hessian is not positive semidefinite")
        g = np.asarray(self.gradient, dtype=float)
        if g.shape != (n,):
            raise Malformed(f"gradient shape {g.shape} does not match n={n}")
        a_eq = _as_matrix(self.eq_matrix, n, "eq_matrix")
        b_eq = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        if b_eq.shape[0] != a_eq.shape[0]:
            raise Malformed("eq_rhs length does not match eq_matrix rows")
        a_in = _as_matrix(self.ineq_matrix, n, "ineq_matrix")
        lo = np.asarray(self.ineq_lower, dtype=float).reshape(-1)
        up = np.asarray(self.ineq_upper, dtype=float).reshape(-1)
        if lo.shape[0] != a_in.shape[0] or up.shape[0] != a_in.shape[0]:
            raise Malformed("inequality bounds do not match ineq_matrix rows")
        for key, val in (("hessian", h), ("gradient", g), ("eq_matrix", a_eq),
                         ("eq_rhs", b_eq), ("ineq_matrix", a_in),
                         ("ineq_lower", lo), ("ineq_upper", up)):
            val = np.ascontiguousarray(val)
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.hessian.shape[0]


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    status: str  # "optimal" | "max_iter" | "infeasible"
    iterations: int
    stationarity: float
    primal_violation: float
    complementarity: float

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _kkt_solve(h, g, rows, rhs):
    """Solve the equality-KKT system; least-squares fallback on rank loss.

    Returns (x, multipliers, consistent)."""
    n = h.shape[0]
    m = rows.shape[0]
    if m == 0:
        try:
            return np.linalg.solve(h, -g), np.zeros(0), True
        except np.linalg.LinAlgError:
            x, *_ = np.linalg.lstsq(h, -g, rcond=None)
            return x, np.zeros(0), True
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = h
    kkt[:n, n:] = rows.T
    kkt[n:, :n] = rows
    vec = np.concatenate([-g, rhs])
    try:
        sol = np.linalg.solve(kkt, vec)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, vec, rcond=None)
    x, mult = sol[:n], sol[n:]
    consistent = np.allclose(rows @ x, rhs, atol=1e-8)
    return x, mult, consistent


def solve_qp(problem: QpProblem, tol: float = 1e-8,
             max_iter: int = 200) -> QpSolution:
    """Active-set solve; the returned status reflects the measured KKT residuals."""
    h, g = problem.hessian, problem.gradient
    a_eq, b_eq = problem.eq_matrix, problem.eq_rhs
    a_in, lo, up = problem.ineq_matrix, problem.ineq_lower, problem.ineq_upper
    n, m_eq, m_in = problem.n, a_eq.shape[0], a_in.shape[0]

    if np.any(lo > up + tol):
        return QpSolution(np.zeros(n), "infeasible", 0, np.inf, np.inf, np.inf)

    # Pinned rows (lower == upper) behave as equalities.
    pinned = np.isclose(lo, up, rtol=0.0, atol=1e-14)

    active: list[tuple[int, int]] = [(i, +1) for i in np.flatnonzero(pinned)]
    x = np.zeros(n)
    status = "max_iter"
    iterations = 0

    for iterations in range(1, max_iter + 1):
        rows_list = [a_eq]
        rhs_list = [b_eq]
        for i, side in active:
            rows_list.append(a_in[i:i + 1] * side)
            rhs_list.append(np.array([up[i] if side > 0 else -lo[i]]))
        rows = np.vstack(rows_list) if rows_list else np.zeros((0, n))
        rhs = np.concatenate(rhs_list) if rhs_list else np.zeros(0)

        x, mult, consistent = _kkt_solve(h, g, rows, rhs)
        if not consistent:
            return QpSolution(x, "infeasible", iterations, np.inf, np.inf, np.inf)

        if m_in:
            vals = a_in @ x
            over = vals - up
            under = lo - vals
            worst = -np.inf
            candidate = None
            for i in range(m_in):
                if pinned[i]:
                    continue
                if over[i] > worst and (i, +1) not in active:
                    worst, candidate = over[i], (i, +1)
                if under[i] > worst and (i, -1) not in active:
                    worst, candidate = under[i], (i, -1)
            if candidate is not None and worst > tol:
                # A row switching sides must first release its old side.
                other = (candidate[0], -candidate[1])
                if other in active:
                    active.remove(other)
                active.append(candidate)
                continue

        free = [k for k, (i, _) in enumerate(active) if not pinned[active[k][0]]]
        if free:
            mults = mult[m_eq:]
            worst_k = min(free, key=lambda k: mults[k])
            if mults[worst_k] < -tol:
                active.pop(worst_k)
                continue
        status = "optimal"
        break

    # Honest residuals for whatever point we ended on.
    grad_lag = h @ x + g
    if m_eq:
        grad_lag = grad_lag + a_eq.T @ mult[:m_eq]
    comp = 0.0
    for k, (i, side) in enumerate(active):
        mu = mult[m_eq + k]
        grad_lag = grad_lag + side * mu * a_in[i]
        slack = (up[i] - a_in[i] @ x) if side > 0 else (a_in[i] @ x - lo[i])
        comp = max(comp, abs(mu * slack))
    stationarity = float(np.max(np.abs(grad_lag), initial=0.0))
    primal = 0.0
    if m_eq:
        primal = float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0))
    if m_in:
        vals = a_in @ x
        primal = max(primal,
                     float(np.max(vals - up, initial=0.0)),
                     float(np.max(lo - vals, initial=0.0)))
    if status == "optimal" and (stationarity > 10 * tol or primal > 10 * tol):
        status = "max_iter"
    return QpSolution(x, status, iterations, stationarity, primal, comp)
