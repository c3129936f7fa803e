"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from cbf_workbench import models


@pytest.fixture
def si():
    return models.single_integrator()


@pytest.fixture
def di():
    return models.double_integrator()


@pytest.fixture
def arm():
    return models.planar_manipulator()


def rk4_step(model, x, u, dt):
    """Classic RK4 oracle for the continuous dynamics (u held constant)."""

    def f(state):
        return models.drift(model, state) + models.actuation(model, state) @ u

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def random_state(model, rng):
    """A generic random state in the benchmark's typical ranges."""
    if model.kind == models.MANIPULATOR:
        return rng.uniform(-np.pi, np.pi, size=3)
    if model.kind == models.DOUBLE_INTEGRATOR:
        return np.concatenate(
            [rng.uniform(0.0, 10.0, size=2), rng.uniform(-5.0, 5.0, size=2)]
        )
    return rng.uniform(0.0, 10.0, size=2)


def fd_gradient(fn, x, step=1e-6):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return out


def random_feasible_problem(rng, n_rows=3, box=(1.0, 1.0)):
    """A random 2-variable QP with a strictly feasible witness point.

    Rows have unit normals and at least 0.05 slack at the witness, so the
    feasible set has interior and grid oracles are well-conditioned.
    """
    from cbf_workbench import qp

    box = np.asarray(box, dtype=float)
    witness = rng.uniform(-0.8, 0.8, size=2) * box
    rows = []
    for _ in range(n_rows):
        a = rng.normal(size=2)
        a /= np.linalg.norm(a)
        slack = rng.uniform(0.05, 0.6)
        rows.append((a, float(a @ witness) - slack))
    u_nom = rng.uniform(-2.0, 2.0, size=2)
    return qp.QpProblem(u_nom, tuple(rows), box)


def grid_oracle(problem, count=2001, xy=None):
    """Brute-force QP minimizer over a dense feasible grid.

    `xy` lets callers reuse precomputed (X, Y) coordinate arrays when the box
    is shared across many problems.
    """
    if xy is None:
        xs = np.linspace(-problem.box[0], problem.box[0], count)
        ys = np.linspace(-problem.box[1], problem.box[1], count)
        X, Y = np.meshgrid(xs, ys)
    else:
        X, Y = xy
    mask = np.ones(X.shape, dtype=bool)
    for a, b in problem.rows:
        mask &= a[0] * X + a[1] * Y >= b
    if not mask.any():
        return None
    cost = (X - problem.u_nom[0]) ** 2 + (Y - problem.u_nom[1]) ** 2
    cost = np.where(mask, cost, np.inf)
    idx = np.unravel_index(np.argmin(cost), cost.shape)
    return np.array([X[idx], Y[idx]])


def refined_grid_oracle(problem, count=1001, xy=None, stages=3, zoom=8):
    """Grid oracle followed by window refinement around the running best.

    A uniform grid alone can miss the minimizer by several spacings when it
    sits in a narrow wedge between near-antiparallel rows (the nearest
    feasible grid point is then far along the wedge), so each stage re-grids
    a window of +-zoom spacings around the best point so far, clipped to the
    box. Still solver-independent: only feasibility and the objective are
    ever evaluated.
    """
    best = grid_oracle(problem, count=count, xy=xy)
    if best is None:
        return None
    box = np.asarray(problem.box, dtype=float)
    u_nom = problem.u_nom
    spacing = 2.0 * box / (count - 1)
    best_cost = float(np.sum((best - u_nom) ** 2))
    for _ in range(stages):
        lows = np.clip(best - zoom * spacing, -box, box)
        highs = np.clip(best + zoom * spacing, -box, box)
        X, Y = np.meshgrid(
            np.linspace(lows[0], highs[0], 81), np.linspace(lows[1], highs[1], 81)
        )
        mask = np.ones(X.shape, dtype=bool)
        for a, b in problem.rows:
            mask &= a[0] * X + a[1] * Y >= b
        if mask.any():
            cost = (X - u_nom[0]) ** 2 + (Y - u_nom[1]) ** 2
            cost = np.where(mask, cost, np.inf)
            idx = np.unravel_index(np.argmin(cost), cost.shape)
            if cost[idx] < best_cost:
                best_cost = float(cost[idx])
                best = np.array([X[idx], Y[idx]])
        spacing = (highs - lows) / 80.0
    return best
