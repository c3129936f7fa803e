"""Dense active-set solver for input-filter quadratic programs.

Solves
    min 0.5 ||u - u_nom||^2
    s.t. a_j . u >= b_j     (constraint rows)
         |u_i| <= box_i     (input box, box_i = inf leaves an axis free)

sized for safety filters: at most 8 variables and 64 rows. The solver walks
a dual active-set path: start at the unconstrained optimum u_nom, pull in the
most violated constraint, and drop active constraints whose multiplier would
go negative. With the identity Hessian every equality subproblem is a plain
projection, so the iteration only needs small dense solves.

Determinism: no randomization anywhere, and ties are broken by lowest
constraint index (most violated scan and dual blocking scan alike), so equal
inputs give bitwise equal outputs.

Infeasible problems terminate with a Farkas certificate: nonnegative weights
on constraints whose normals cancel while the weighted right-hand sides sum
positive, which no point in the box can satisfy.

Constraint indexing used by active_set, multipliers and certificates:
rows come first (0 .. m-1), then upper box bounds (m .. m+n-1), then lower
box bounds (m+n .. m+2n-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
FAILURE = "solver-failure"

MAX_VARS = 8
MAX_ROWS = 64

_FEAS_TOL = 1e-8  # KKT residual tolerance
_PIVOT_TOL = 1e-10  # dependence / degeneracy tolerance


@dataclass(frozen=True, eq=False)
class QpProblem:
    u_nom: np.ndarray
    rows: tuple  # tuple of (a, b) pairs, meaning a . u >= b
    box: np.ndarray

    def __post_init__(self):
        u_nom = np.asarray(self.u_nom, dtype=float)
        box = np.asarray(self.box, dtype=float)
        n = u_nom.shape[0]
        if u_nom.ndim != 1 or n > MAX_VARS:
            raise ValueError(f"u_nom must be a vector of at most {MAX_VARS} entries")
        if not np.all(np.isfinite(u_nom)):
            raise ValueError("u_nom must be finite")
        if box.shape != (n,) or not np.all(box > 0.0):
            raise ValueError("box must be positive with one entry per variable")
        rows = []
        for a, b in self.rows:
            a = np.asarray(a, dtype=float)
            if a.shape != (n,):
                raise ValueError("row normal has the wrong dimension")
            if not np.all(np.isfinite(a)) or not np.isfinite(b):
                raise ValueError("row coefficients must be finite")
            rows.append((a, float(b)))
        if len(rows) > MAX_ROWS:
            raise ValueError(f"at most {MAX_ROWS} rows supported")
        object.__setattr__(self, "u_nom", u_nom)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "rows", tuple(rows))

    @property
    def n(self) -> int:
        return self.u_nom.shape[0]

    @property
    def m(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class QpOutcome:
    status: str
    u_star: np.ndarray | None
    active_set: tuple
    multipliers: tuple
    certificate: np.ndarray | None = None
    diagnostic: str = ""


def _stack_arrays(a_rows: np.ndarray, b_rows: np.ndarray, box: np.ndarray):
    """All constraints as a . u >= b, box bounds included; inf bounds masked."""
    m, n = a_rows.shape
    total = m + 2 * n
    A = np.zeros((total, n))
    b = np.full(total, -np.inf)
    usable = np.ones(total, dtype=bool)
    A[:m] = a_rows
    b[:m] = b_rows
    for i in range(n):
        A[m + i, i] = -1.0  # -u_i >= -box_i
        A[m + n + i, i] = 1.0  # u_i >= -box_i
        if np.isfinite(box[i]):
            b[m + i] = -box[i]
            b[m + n + i] = -box[i]
        else:
            usable[m + i] = False
            usable[m + n + i] = False
    return A, b, usable


def _row_arrays(problem: QpProblem):
    a_rows = np.zeros((problem.m, problem.n))
    b_rows = np.zeros(problem.m)
    for j, (a, bj) in enumerate(problem.rows):
        a_rows[j] = a
        b_rows[j] = bj
    return a_rows, b_rows


def _stacked(problem: QpProblem):
    a_rows, b_rows = _row_arrays(problem)
    return _stack_arrays(a_rows, b_rows, problem.box)


def solve(problem: QpProblem, max_iter: int = 500) -> QpOutcome:
    a_rows, b_rows = _row_arrays(problem)
    return solve_arrays(problem.u_nom, a_rows, b_rows, problem.box, max_iter)


def solve_arrays(
    u_nom: np.ndarray,
    a_rows: np.ndarray,
    b_rows: np.ndarray,
    box: np.ndarray,
    max_iter: int = 500,
) -> QpOutcome:
    """solve() on pre-stacked row arrays; skips QpProblem validation.

    Callers are expected to pass finite coefficients with matching shapes
    (a_rows of shape (m, n)); the closed-loop engine uses this entry point.
    """
    # cheap exit: nothing violated at u_nom, so it is already the optimum
    worst = -np.inf
    if a_rows.size:
        worst = float((b_rows - a_rows @ u_nom).max())
    finite = np.isfinite(box)
    if finite.any():
        worst = max(worst, float((np.abs(u_nom) - box)[finite].max()))
    if worst <= _FEAS_TOL:
        return QpOutcome(OPTIMAL, u_nom.copy(), (), ())

    A, b, usable = _stack_arrays(a_rows, b_rows, box)
    u = u_nom.copy()
    work: list[int] = []  # active constraint indices, insertion order
    lam: list[float] = []

    for _ in range(max_iter):
        viol = b - A @ u
        viol[~usable] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= _FEAS_TOL:
            order = np.argsort(work)
            return QpOutcome(
                OPTIMAL,
                u,
                tuple(int(work[i]) for i in order),
                tuple(float(lam[i]) for i in order),
            )

        lam_p = 0.0
        while True:
            a_p = A[p]
            if work:
                N = A[work]
                try:
                    r = np.linalg.solve(N @ N.T, N @ a_p)
                except np.linalg.LinAlgError:
                    return QpOutcome(
                        FAILURE, None, (), (), diagnostic="singular active-set system"
                    )
                z = a_p - N.T @ r
            else:
                r = np.zeros(0)
                z = a_p.copy()

            zz = float(z @ z)
            t_full = np.inf
            if zz > _PIVOT_TOL:
                t_full = (b[p] - float(a_p @ u)) / zz

            t_drop = np.inf
            j_drop = -1
            for j in range(len(work)):
                if r[j] > _PIVOT_TOL:
                    tj = lam[j] / r[j]
                    if tj < t_drop:
                        t_drop = tj
                        j_drop = j

            if not np.isfinite(t_full) and not np.isfinite(t_drop):
                # a_p is a nonnegative combination of active normals that
                # cannot be satisfied: Farkas certificate
                cert = np.zeros(A.shape[0])
                cert[p] = 1.0
                for j, w in enumerate(work):
                    cert[w] = max(0.0, -float(r[j]))
                return QpOutcome(
                    INFEASIBLE,
                    None,
                    (),
                    (),
                    certificate=cert,
                    diagnostic="constraint rows contradict the input box",
                )

            t = min(t_full, t_drop)
            u = u + t * z
            for j in range(len(work)):
                lam[j] -= t * float(r[j])
            lam_p += t
            if t_full <= t_drop:
                work.append(p)
                lam.append(lam_p)
                break
            work.pop(j_drop)
            lam.pop(j_drop)

    return QpOutcome(FAILURE, None, (), (), diagnostic="iteration limit reached")


def feasible(problem: QpProblem, max_iter: int = 500) -> bool:
    """Whether the rows intersected with the box are nonempty."""
    return solve(problem, max_iter=max_iter).status == OPTIMAL


def kkt_residual(problem: QpProblem, outcome: QpOutcome) -> float:
    """Worst KKT violation of an optimal outcome (for verification)."""
    if outcome.status != OPTIMAL:
        raise ValueError("kkt_residual needs an optimal outcome")
    A, b, usable = _stacked(problem)
    u = outcome.u_star
    res = 0.0
    viol = b[usable] - A[usable] @ u
    if viol.size:
        res = max(res, float(viol.max()))
    grad = u - problem.u_nom
    for idx, mult in zip(outcome.active_set, outcome.multipliers):
        if mult < 0.0:
            res = max(res, -mult)
        grad = grad - mult * A[idx]
        res = max(res, abs(mult * (float(A[idx] @ u) - b[idx])))
    res = max(res, float(np.max(np.abs(grad))))
    return res


def certificate_report(problem: QpProblem, outcome: QpOutcome):
    """Rows-only view of a Farkas certificate.

    Returns (row_weights, sup_over_box, weighted_rhs): the nonnegative row
    weights, the largest value the weighted row normals can reach anywhere in
    the box, and the weighted right-hand side that would have to be met.
    The certificate is contradictory when sup_over_box < weighted_rhs.
    """
    if outcome.status != INFEASIBLE or outcome.certificate is None:
        raise ValueError("certificate_report needs an infeasible outcome")
    m = problem.m
    weights = outcome.certificate[:m]
    combined = np.zeros(problem.n)
    rhs = 0.0
    for j, (a, bj) in enumerate(problem.rows):
        combined += weights[j] * a
        rhs += weights[j] * bj
    finite = np.isfinite(problem.box)
    sup = float(np.sum(np.abs(combined[finite]) * problem.box[finite]))
    if np.any(~finite & (np.abs(combined) > 0.0)):
        sup = np.inf
    return weights, sup, rhs
