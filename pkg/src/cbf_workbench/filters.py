"""Safety filters: turn barriers into QP constraint rows and solve.

Every filter solves min ||u - u_nom||^2 subject to one linear row per
barrier. The families differ only in how a row is built from the barrier
derivatives at the current state:

    cbf        Lg_h . u >= -Lf_h - gamma * h
    hocbf      LgLf_h . u >= -Lf2_h - (g1 + g2) * h_dot - g1 * g2 * h
    naive-rd1  one-step forward prediction, Euler linearized:
               h + dt * (Lf_h + Lg_h . u) >= 0
    naive-rd2  two-step forward prediction over T = 2 * dt:
               h + T * h_dot + 0.5 * T^2 * (Lf2_h + LgLf_h . u) >= 0

The cbf and hocbf families keep the input box inside the QP, so running out
of actuation shows up as an infeasible solve. The naive-rd2 family solves
over rows alone and leaves saturation to the caller's input clamp; putting
the box into that QP would misreport near-obstacle saturation as
infeasibility, which is not how the two-step prediction scheme behaves (its
rows are numerically tiny in u and conflict with any finite box long before
they conflict with each other).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import barriers as br
from . import models, qp
from .models import DOUBLE_INTEGRATOR, MANIPULATOR, SystemModel

FAMILIES = ("cbf", "hocbf", "naive-rd1", "naive-rd2")


@dataclass(frozen=True)
class FilterSpec:
    family: str
    gamma: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None
    dt: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown filter family {self.family!r}")
        if self.family == "cbf":
            if self.gamma is None or self.gamma <= 0.0:
                raise ValueError("cbf family needs gamma > 0")
        elif self.family == "hocbf":
            if (
                self.gamma1 is None
                or self.gamma2 is None
                or self.gamma1 <= 0.0
                or self.gamma2 <= 0.0
            ):
                raise ValueError("hocbf family needs gamma1 > 0 and gamma2 > 0")
        else:
            if self.dt is None or self.dt <= 0.0:
                raise ValueError("naive families need dt > 0")

    def describe(self) -> dict:
        out = {"family": self.family}
        for name in ("gamma", "gamma1", "gamma2", "dt"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value)
        return out


@dataclass(frozen=True, eq=False)
class ControlDecision:
    u: np.ndarray
    feasible: bool
    constraint_margins: np.ndarray  # per row, a . u - rhs at the returned u
    status: str
    diagnostic: str = ""


def cbf_constraint_row(model: SystemModel, b: br.Barrier, gamma: float, x):
    """Row enforcing h_dot >= -gamma * h for a degree-1 pairing."""
    h, lf_h, lg_h = br.lie_derivatives(b, model, x)
    return lg_h, -lf_h - gamma * h


def hocbf_constraint_row(model: SystemModel, b: br.Barrier, gamma1, gamma2, x):
    """Second-order row for a degree-2 pairing with linear class-K at both levels."""
    h, h_dot, lf2_h, lglf_h = br.hocbf_terms(b, model, x)
    return lglf_h, -lf2_h - (gamma1 + gamma2) * h_dot - gamma1 * gamma2 * h


def naive_constraint_row_rd1(model: SystemModel, b: br.Barrier, dt: float, x):
    """Require the Euler-linearized next-step value to stay nonnegative."""
    h, lf_h, lg_h = br.lie_derivatives(b, model, x)
    return dt * lg_h, -h - dt * lf_h


def naive_constraint_row_rd2(model: SystemModel, b: br.Barrier, dt: float, x):
    """Second-order Taylor prediction of h over a two-step horizon T = 2 dt."""
    h, h_dot, lf2_h, lglf_h = br.hocbf_terms(b, model, x)
    horizon = 2.0 * dt
    half_t2 = 0.5 * horizon * horizon
    return half_t2 * lglf_h, -h - horizon * h_dot - half_t2 * lf2_h


def build_rows(model: SystemModel, barrier_list, spec: FilterSpec, x):
    """One (a, rhs) row per barrier, in list order."""
    rows = []
    for b in barrier_list:
        if spec.family == "cbf":
            rows.append(cbf_constraint_row(model, b, spec.gamma, x))
        elif spec.family == "hocbf":
            if b.relative_degree == 2:
                rows.append(
                    hocbf_constraint_row(model, b, spec.gamma1, spec.gamma2, x)
                )
            else:
                # degree-1 barriers (the velocity bound) ride along as a
                # plain cbf row; gamma1 sets their decay rate
                rows.append(cbf_constraint_row(model, b, spec.gamma1, x))
        elif spec.family == "naive-rd1":
            rows.append(naive_constraint_row_rd1(model, b, spec.dt, x))
        else:  # naive-rd2
            if b.relative_degree == 2:
                rows.append(naive_constraint_row_rd2(model, b, spec.dt, x))
            else:
                rows.append(naive_constraint_row_rd1(model, b, spec.dt, x))
    return rows


def filter_box(model: SystemModel, spec: FilterSpec) -> np.ndarray:
    """Input box used inside the QP; unbounded for the naive-rd2 family."""
    if spec.family == "naive-rd2":
        return np.full(model.input_dim, np.inf)
    return model.input_box


def filter_control(model: SystemModel, barrier_list, spec: FilterSpec, x, u_nom):
    """Minimally adjust u_nom to satisfy every barrier row at x."""
    rows = build_rows(model, barrier_list, spec, x)
    problem = qp.QpProblem(u_nom, rows, filter_box(model, spec))
    return decide(problem, rows)


def decide(problem: qp.QpProblem, rows) -> ControlDecision:
    """Run the QP and package the outcome, falling back to u = 0."""
    out = qp.solve(problem)
    if out.status == qp.OPTIMAL:
        u = out.u_star
        margins = _row_margins(rows, u)
        return ControlDecision(u, True, margins, out.status)
    u = np.zeros(problem.n)
    margins = _row_margins(rows, u)
    diagnostic = out.diagnostic
    if out.status == qp.FAILURE:
        diagnostic = f"treated as infeasible: {out.diagnostic}"
    return ControlDecision(u, False, margins, out.status, diagnostic)


def _row_margins(rows, u) -> np.ndarray:
    if not rows:
        return np.zeros(0)
    return np.array([float(a @ u) - rhs for a, rhs in rows])


MANIPULATOR_RATE_CAP = 0.5  # rad/s, direction-preserving joint-rate limit


def nominal_control(
    model: SystemModel,
    goal: np.ndarray,
    x: np.ndarray,
    kp: float = 1.0,
    kd: float = 2.0,
    damping: float = 1e-2,
) -> np.ndarray:
    """Goal-seeking controller that ignores obstacles entirely.

    Proportional on position for the single integrator, PD for the double
    integrator, and resolved-rate via a damped pseudo-inverse for the arm.
    The arm's joint rates are additionally capped (scaling the whole
    vector, so the task-space direction is preserved). Always clamped to
    the input box.
    """
    if model.kind == DOUBLE_INTEGRATOR:
        u = kp * (goal - x[:2]) - kd * x[2:4]
    elif model.kind == MANIPULATOR:
        jac = models.end_effector_jacobian(model, x)
        err = goal - models.end_effector(model, x)
        jjt = jac @ jac.T + (damping**2) * np.eye(2)
        u = jac.T @ np.linalg.solve(jjt, kp * err)
        peak = np.max(np.abs(u))
        if peak > MANIPULATOR_RATE_CAP:
            u = u * (MANIPULATOR_RATE_CAP / peak)
    else:
        u = kp * (goal - x[:2])
    return models.clamp_input(model, u)
