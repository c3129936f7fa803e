"""Safety filter families: row construction, box policy, QP wiring."""

import numpy as np
import pytest

from cbf_workbench import barriers, filters, models

from .conftest import random_state


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        filters.FilterSpec("unknown")
    with pytest.raises(ValueError):
        filters.FilterSpec("cbf")
    with pytest.raises(ValueError):
        filters.FilterSpec("cbf", gamma=0.0)
    with pytest.raises(ValueError):
        filters.FilterSpec("hocbf", gamma1=1.0)
    with pytest.raises(ValueError):
        filters.FilterSpec("hocbf", gamma1=1.0, gamma2=-1.0)
    with pytest.raises(ValueError):
        filters.FilterSpec("naive-rd1")
    with pytest.raises(ValueError):
        filters.FilterSpec("naive-rd2", dt=0.0)
    spec = filters.FilterSpec("hocbf", gamma1=1.0, gamma2=2.0)
    assert spec.describe() == {"family": "hocbf", "gamma1": 1.0, "gamma2": 2.0}


def test_cbf_row_example(si):
    b = barriers.circle_obstacle((1.0, 0.0), 1.0, si)
    a, rhs = filters.cbf_constraint_row(si, b, 1.0, np.array([3.0, 0.0]))
    assert np.allclose(a, [4.0, 0.0])
    assert rhs == pytest.approx(-3.0)


def test_cbf_velocity_row_example(di):
    b = barriers.velocity_bound(2.0)
    a, rhs = filters.cbf_constraint_row(di, b, 2.0, np.array([0.0, 0.0, 1.0, 0.0]))
    assert np.allclose(a, [-2.0, 0.0])
    assert rhs == pytest.approx(-6.0)


def test_hocbf_row_example(di):
    b = barriers.circle_obstacle((0.0, 0.0), 1.0, di)
    x = np.array([2.0, 0.0, -1.0, 0.0])
    a, rhs = filters.hocbf_constraint_row(di, b, 1.0, 1.0, x)
    assert np.allclose(a, [4.0, 0.0])
    assert rhs == pytest.approx(3.0)  # the row demands u_x >= 0.75


def test_naive_rd1_row_example(si):
    b = barriers.circle_obstacle((0.0, 0.0), np.sqrt(0.99), si)
    x = np.array([-1.0, 0.0])
    assert barriers.barrier_value(b, si, x) == pytest.approx(0.01)
    a, rhs = filters.naive_constraint_row_rd1(si, b, 0.01, x)
    assert np.allclose(a, [-0.02, 0.0])
    assert rhs == pytest.approx(-0.01)


def test_naive_rd2_row_example(di):
    b = barriers.circle_obstacle((0.0, 0.0), 1.0, di)
    x = np.array([2.0, 0.0, -1.0, 0.0])
    a, rhs = filters.naive_constraint_row_rd2(di, b, 0.01, x)
    # horizon T = 2 dt = 0.02, coefficient T^2/2 = 2e-4 on LgLf = (4, 0)
    assert np.allclose(a, [8.0e-4, 0.0], atol=1e-18)
    assert rhs == pytest.approx(-2.9204, abs=1e-12)


def test_velocity_bound_rides_along_in_every_family(di):
    vel = barriers.velocity_bound(2.0)
    x = np.array([0.0, 0.0, 1.0, 0.0])
    for spec in (
        filters.FilterSpec("cbf", gamma=3.0),
        filters.FilterSpec("hocbf", gamma1=3.0, gamma2=7.0),
    ):
        (a, rhs), = filters.build_rows(di, [vel], spec, x)
        # hocbf reuses gamma1 for its degree-1 rows, so both match gamma=3
        assert np.allclose(a, [-2.0, 0.0])
        assert rhs == pytest.approx(-9.0)
    for family in ("naive-rd1", "naive-rd2"):
        spec = filters.FilterSpec(family, dt=0.01)
        (a, rhs), = filters.build_rows(di, [vel], spec, x)
        assert np.allclose(a, [-0.02, 0.0])
        assert rhs == pytest.approx(-3.0)  # -h


def test_build_rows_order_and_mixed_degrees(di):
    circle = barriers.circle_obstacle((0.0, 0.0), 1.0, di)
    vel = barriers.velocity_bound(2.0)
    x = np.array([2.0, 0.0, -1.0, 0.0])
    spec = filters.FilterSpec("hocbf", gamma1=1.0, gamma2=1.0)
    rows = filters.build_rows(di, [circle, vel], spec, x)
    assert len(rows) == 2
    assert np.allclose(rows[0][0], [4.0, 0.0])  # degree-2 row first, as listed
    assert np.allclose(rows[1][0], [2.0, 0.0])  # velocity row: -2 v = (2, 0)


def test_box_policy(di, arm):
    assert np.all(
        np.isinf(filters.filter_box(di, filters.FilterSpec("naive-rd2", dt=0.01)))
    )
    for spec in (
        filters.FilterSpec("cbf", gamma=1.0),
        filters.FilterSpec("hocbf", gamma1=1.0, gamma2=1.0),
        filters.FilterSpec("naive-rd1", dt=0.01),
    ):
        assert np.array_equal(filters.filter_box(di, spec), di.input_box)
    assert np.array_equal(
        filters.filter_box(arm, filters.FilterSpec("cbf", gamma=1.0)), arm.input_box
    )


def test_naive_rd1_equals_cbf_with_reciprocal_gamma(si):
    # the one-step linearized constraint is the cbf row with gamma = 1/dt,
    # scaled by dt: identical feasible halfspace, identical filtered control
    b = barriers.circle_obstacle((4.0, 5.0), 0.65, si)
    rng = np.random.default_rng(21)
    for dt in (1e-2, 1e-3, 1e-4):
        naive = filters.FilterSpec("naive-rd1", dt=dt)
        cbf = filters.FilterSpec("cbf", gamma=1.0 / dt)
        for _ in range(20):
            x = random_state(si, rng)
            (an, rn), = filters.build_rows(si, [b], naive, x)
            (ac, rc), = filters.build_rows(si, [b], cbf, x)
            assert np.allclose(an, dt * ac, rtol=1e-12, atol=1e-15)
            assert rn == pytest.approx(dt * rc, rel=1e-12, abs=1e-15)
            u_nom = rng.uniform(-5.0, 5.0, size=2)
            d1 = filters.filter_control(si, [b], naive, x, u_nom)
            d2 = filters.filter_control(si, [b], cbf, x, u_nom)
            assert d1.feasible == d2.feasible
            assert np.allclose(d1.u, d2.u, atol=1e-9)


def test_filter_is_identity_on_safe_nominal(si):
    b = barriers.circle_obstacle((4.0, 5.0), 0.65, si)
    spec = filters.FilterSpec("cbf", gamma=1.0)
    x = np.array([0.0, 0.0])  # far from the obstacle
    u_nom = np.array([0.3, 0.4])  # gentle command, constraint slack is huge
    d = filters.filter_control(si, [b], spec, x, u_nom)
    assert d.feasible
    assert np.array_equal(d.u, u_nom)
    assert np.all(d.constraint_margins >= -1e-8)


def test_zero_input_is_trivially_safe_for_driftless(si, arm):
    # with no drift, u = 0 freezes the state, so every cbf row accepts it
    # at any state inside the safe set
    rng = np.random.default_rng(22)
    cases = [
        (si, [barriers.circle_obstacle((4.0, 5.0), 0.65, si)]),
        (arm, [barriers.segment_obstacle((6.0, 1.5), 0.65, k) for k in range(3)]),
    ]
    spec = filters.FilterSpec("cbf", gamma=1.0)
    for model, blist in cases:
        found = 0
        while found < 50:
            x = random_state(model, rng)
            if min(barriers.barrier_value(b, model, x) for b in blist) < 0.0:
                continue
            found += 1
            d = filters.filter_control(model, blist, spec, x, np.zeros(model.input_dim))
            assert d.feasible
            assert np.array_equal(d.u, np.zeros(model.input_dim))


def test_infeasible_falls_back_to_zero_input(di):
    # deep inside the obstacle with hostile gains the box cannot satisfy the
    # row; the decision must say so and hold u = 0
    b = barriers.circle_obstacle((0.0, 0.0), 1.0, di)
    spec = filters.FilterSpec("hocbf", gamma1=50.0, gamma2=50.0)
    x = np.array([0.05, 0.0, -3.0, 0.0])
    d = filters.filter_control(di, [b], spec, x, np.zeros(2))
    assert not d.feasible
    assert d.status == "infeasible"
    assert np.array_equal(d.u, np.zeros(2))
    assert d.constraint_margins.shape == (1,)
    assert d.constraint_margins[0] < 0.0


def test_filtered_control_respects_rows_and_box(di):
    rng = np.random.default_rng(23)
    blist = [
        barriers.circle_obstacle((4.0, 5.0), 0.65, di),
        barriers.velocity_bound(3.0),
    ]
    spec = filters.FilterSpec("hocbf", gamma1=1.0, gamma2=1.0)
    feasible_seen = 0
    for _ in range(200):
        x = random_state(di, rng)
        u_nom = rng.uniform(-5.0, 5.0, size=2)
        d = filters.filter_control(di, blist, spec, x, u_nom)
        if not d.feasible:
            continue
        feasible_seen += 1
        assert np.all(d.constraint_margins >= -1e-8)
        assert np.all(np.abs(d.u) <= di.input_box + 1e-10)
    assert feasible_seen > 100


def test_nominal_control_examples(si, di):
    assert np.allclose(
        filters.nominal_control(si, np.array([3.0, 0.0]), np.zeros(2)), [3.0, 0.0]
    )
    assert np.allclose(
        filters.nominal_control(si, np.array([10.0, 0.0]), np.zeros(2)), [5.0, 0.0]
    )
    u = filters.nominal_control(di, np.zeros(2), np.array([0.0, 0.0, 1.0, 0.0]))
    assert np.allclose(u, [-2.0, 0.0])


def test_nominal_control_arm_rate_cap(arm):
    q = np.array([0.2, -0.4, 0.3])
    goal = models.end_effector(arm, q) + np.array([3.0, 1.0])  # far away
    u = filters.nominal_control(arm, goal, q)
    assert np.max(np.abs(u)) == pytest.approx(filters.MANIPULATOR_RATE_CAP)
    # capping scales the whole vector, preserving the direction
    jac = models.end_effector_jacobian(arm, q)
    err = goal - models.end_effector(arm, q)
    jjt = jac @ jac.T + 1e-4 * np.eye(2)
    raw = jac.T @ np.linalg.solve(jjt, err)
    cos = float(raw @ u) / (np.linalg.norm(raw) * np.linalg.norm(u))
    assert cos == pytest.approx(1.0, abs=1e-12)


def test_nominal_control_goal_reached_is_zero(si, di, arm):
    assert np.allclose(filters.nominal_control(si, np.ones(2), np.ones(2)), 0.0)
    assert np.allclose(
        filters.nominal_control(di, np.ones(2), np.array([1.0, 1.0, 0.0, 0.0])), 0.0
    )
    q = np.array([0.3, 0.1, -0.2])
    goal = models.end_effector(arm, q)
    assert np.allclose(filters.nominal_control(arm, goal, q), 0.0, atol=1e-12)


def test_hocbf_first_order_envelope_along_feasible_trace(di):
    # with the input box inside the QP, every applied input satisfies the
    # second-order row, so psi1 = h_dot + gamma1 h stays nonnegative along
    # the trace up to integration error
    b = barriers.circle_obstacle((5.0, 0.0), 0.65, di)
    vel = barriers.velocity_bound(3.0)
    spec = filters.FilterSpec("hocbf", gamma1=1.0, gamma2=1.0)
    goal = np.array([10.0, 0.3])
    x = np.array([0.0, 0.3, 0.0, 0.0])  # offset so the path bends around
    dt = 0.01
    min_psi1 = np.inf
    for _ in range(1500):
        data = barriers.hocbf_terms(b, di, x)
        min_psi1 = min(min_psi1, data.h_dot + spec.gamma1 * data.h)
        u_nom = filters.nominal_control(di, goal, x)
        d = filters.filter_control(di, [b, vel], spec, x, u_nom)
        assert d.feasible
        x = models.step(di, x, d.u, dt)
    assert min_psi1 >= -1e-4
    assert np.linalg.norm(x[:2] - goal) < 0.5  # the run actually passed the obstacle
