"""Dense active-set QP solver: optima, certificates, determinism."""

import numpy as np
import pytest

from cbf_workbench import qp

from .conftest import grid_oracle, random_feasible_problem


def test_unconstrained_interior_returns_nominal():
    p = qp.QpProblem(np.array([1.0, 0.0]), (), np.array([5.0, 5.0]))
    out = qp.solve(p)
    assert out.status == qp.OPTIMAL
    assert np.array_equal(out.u_star, [1.0, 0.0])
    assert out.active_set == ()


def test_halfspace_projection():
    row = (np.array([-1.0, 0.0]), -0.5)  # u_x <= 0.5
    p = qp.QpProblem(np.array([1.0, 0.0]), (row,), np.array([5.0, 5.0]))
    out = qp.solve(p)
    assert out.status == qp.OPTIMAL
    assert np.allclose(out.u_star, [0.5, 0.0], atol=1e-12)
    assert qp.kkt_residual(p, out) < 1e-8


def test_two_active_rows():
    rows = (
        (np.array([-1.0, 0.0]), -0.5),  # u_x <= 0.5
        (np.array([0.0, -1.0]), -0.25),  # u_y <= 0.25
    )
    p = qp.QpProblem(np.array([2.0, 2.0]), rows, np.array([5.0, 5.0]))
    out = qp.solve(p)
    assert np.allclose(out.u_star, [0.5, 0.25], atol=1e-10)
    assert qp.kkt_residual(p, out) < 1e-8


def test_box_corner_projection():
    p = qp.QpProblem(np.array([7.0, -9.0]), (), np.array([5.0, 5.0]))
    out = qp.solve(p)
    assert np.allclose(out.u_star, [5.0, -5.0], atol=1e-10)
    assert qp.kkt_residual(p, out) < 1e-8


def test_bound_contradiction_is_infeasible():
    row = (np.array([1.0, 0.0]), 2.0)
    p = qp.QpProblem(np.array([0.0, 0.0]), (row,), np.array([1.0, 1.0]))
    out = qp.solve(p)
    assert out.status == qp.INFEASIBLE
    assert out.u_star is None
    weights, sup, rhs = qp.certificate_report(p, out)
    assert np.all(weights >= 0.0)
    assert sup < rhs - 1e-8


def test_feasible_examples():
    box = np.array([5.0, 5.0])
    assert qp.feasible(qp.QpProblem(np.zeros(2), (), box))
    tight = (np.array([1.0, 0.0]), 2.0)
    assert not qp.feasible(qp.QpProblem(np.zeros(2), (tight,), np.array([1.0, 1.0])))
    rows = (
        (np.array([1.0, 0.0]), 0.75),  # u_x >= 0.75
        (np.array([-1.0, 0.0]), -5.0),  # u_x <= 5
    )
    assert qp.feasible(qp.QpProblem(np.zeros(2), rows, box))


def test_feasible_single_point_on_box_face():
    row = (np.array([1.0, 0.0]), 1.0)  # u_x >= box edge
    p = qp.QpProblem(np.array([0.0, 0.3]), (row,), np.array([1.0, 1.0]))
    out = qp.solve(p)
    assert out.status == qp.OPTIMAL
    assert np.allclose(out.u_star, [1.0, 0.3], atol=1e-10)


def test_cheap_exit_returns_nominal_bitwise():
    u_nom = np.array([0.2, 0.3])
    row = (np.array([1.0, 0.0]), 0.1)
    p = qp.QpProblem(u_nom, (row,), np.array([1.0, 1.0]))
    out = qp.solve(p)
    assert np.array_equal(out.u_star, u_nom)
    assert out.u_star is not p.u_nom  # a copy, never an alias


def test_problem_validation():
    box = np.array([1.0, 1.0])
    with pytest.raises(ValueError):
        qp.QpProblem(np.array([np.nan, 0.0]), (), box)
    with pytest.raises(ValueError):
        qp.QpProblem(np.zeros(2), (), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        qp.QpProblem(np.zeros(2), ((np.array([1.0, 0.0, 0.0]), 0.0),), box)
    with pytest.raises(ValueError):
        qp.QpProblem(np.zeros(2), ((np.array([np.inf, 0.0]), 0.0),), box)
    with pytest.raises(ValueError):
        qp.QpProblem(np.zeros(9), (), np.ones(9))
    many = tuple((np.array([1.0, 0.0]), -10.0) for _ in range(65))
    with pytest.raises(ValueError):
        qp.QpProblem(np.zeros(2), many, box)


def test_matches_grid_oracle():
    # A dense grid certifies the optimal value to grid resolution: no grid
    # point may beat the solver, and the best grid point must come within
    # 2e-3 of the solver's distance to the nominal input.  (The argmin
    # itself can wander O(sqrt(spacing)) along a constraint boundary, so the
    # value is the quantity a grid can actually pin down.)
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_feasible_problem(rng, n_rows=int(rng.integers(1, 5)))
        out = qp.solve(p)
        assert out.status == qp.OPTIMAL
        assert qp.kkt_residual(p, out) < 1e-8
        oracle = grid_oracle(p, count=2001)
        d_solver = np.linalg.norm(out.u_star - p.u_nom)
        d_grid = np.linalg.norm(oracle - p.u_nom)
        assert d_solver <= d_grid + 1e-9  # grid points are feasible
        assert d_grid - d_solver < 2e-3


def test_infeasible_certificates_are_sound():
    rng = np.random.default_rng(12)
    box = np.array([1.0, 1.0])
    checked = 0
    for _ in range(50):
        # two antiparallel rows with a gap, plus noise rows
        a = rng.normal(size=2)
        a /= np.linalg.norm(a)
        b = rng.uniform(-0.5, 0.5)
        gap = rng.uniform(0.1, 1.0)
        rows = [(a, b), (-a, -(b - gap))]  # a.u >= b and a.u <= b - gap
        for _ in range(int(rng.integers(0, 3))):
            c = rng.normal(size=2)
            c /= np.linalg.norm(c)
            rows.append((c, rng.uniform(-1.0, 0.5)))
        p = qp.QpProblem(rng.uniform(-1, 1, size=2), tuple(rows), box)
        out = qp.solve(p)
        assert out.status == qp.INFEASIBLE
        weights, sup, rhs = qp.certificate_report(p, out)
        assert np.all(weights >= 0.0)
        assert sup < rhs + 1e-8
        # no feasible point exists on a verification grid
        assert grid_oracle(p, count=301) is None
        checked += 1
    assert checked == 50


def test_determinism_bitwise():
    rng = np.random.default_rng(13)
    for _ in range(10):
        seed_state = rng.integers(0, 2**32)
        r1 = np.random.default_rng(seed_state)
        r2 = np.random.default_rng(seed_state)
        p1 = random_feasible_problem(r1, n_rows=3)
        p2 = random_feasible_problem(r2, n_rows=3)
        o1 = qp.solve(p1)
        o2 = qp.solve(p2)
        assert o1.status == o2.status
        assert np.array_equal(o1.u_star, o2.u_star)
        assert o1.active_set == o2.active_set
        assert o1.multipliers == o2.multipliers


def test_projection_is_nonexpansive():
    # the minimizer is the projection of u_nom onto a fixed convex set,
    # so it is 1-Lipschitz in u_nom
    rng = np.random.default_rng(14)
    for _ in range(30):
        p = random_feasible_problem(rng, n_rows=3)
        eps = rng.uniform(1e-4, 1e-2)
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        shifted = qp.QpProblem(p.u_nom + eps * direction, p.rows, p.box)
        u1 = qp.solve(p).u_star
        u2 = qp.solve(shifted).u_star
        assert np.linalg.norm(u2 - u1) <= eps + 1e-9


def test_multipliers_nonnegative_on_active_rows():
    rng = np.random.default_rng(15)
    for _ in range(30):
        p = random_feasible_problem(rng, n_rows=4)
        out = qp.solve(p)
        assert out.status == qp.OPTIMAL
        for mult in out.multipliers:
            assert mult >= -1e-10
