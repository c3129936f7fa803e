"""Playground session protocol: handshake, stepping, queries, totality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbf_workbench import barriers, bench, bridge, certify, models, qp, world
from cbf_workbench.bench import TrialConfig


@pytest.fixture
def core():
    return bridge.BridgeCore()


def send(core, tag, payload=None, session=None, msg_id=1):
    msg = {"type": tag, "id": msg_id, "payload": payload or {}}
    if session is not None:
        msg["session"] = session
    return core.handle(msg)


def ok(reply):
    assert reply["type"] == "reply" and reply["ok"] is True, reply.get("error")
    return reply["result"]


def err(reply):
    assert reply["type"] == "reply" and reply["ok"] is False, reply
    return reply["error"]


def start(core, **payload):
    payload.setdefault("model", "double-integrator")
    payload.setdefault("family", "hocbf")
    if payload["family"] == "hocbf":
        payload.setdefault("gamma1", 1.0)
        payload.setdefault("gamma2", 1.0)
    return ok(send(core, "init", payload))


def demo_environment() -> dict:
    """Hand-built workspace: one obstacle on the left wall, clear start."""
    return {
        "schema_version": 1,
        "model": models.DOUBLE_INTEGRATOR,
        "seed": 0,
        "workspace": 10.0,
        "obstacle_centers": [[0.0, 5.0]],
        "obstacle_radius": 0.4,
        "robot_radius": 0.25,
        "start_state": [5.0, 5.0, 0.0, 0.0],
        "goal": [9.0, 5.0],
    }


def test_init_handshake(core):
    snap = start(core, seed=3)
    assert snap["protocol_version"] == bridge.PROTOCOL_VERSION
    assert snap["supported_models"] == sorted(models.KNOWN_KINDS)
    assert set(snap["supported_families"]) == set(
        ("cbf", "hocbf", "naive-rd1", "naive-rd2")
    )
    assert snap["session"] == "s0"
    assert snap["model"]["kind"] == models.DOUBLE_INTEGRATOR
    assert snap["model"]["input_box"] == [5.0, 5.0]
    assert snap["steps"] == 0
    assert snap["running"] is False
    assert snap["collided"] is False
    assert snap["x"] == snap["environment"]["start_state"]
    assert snap["filter"]["family"] == "hocbf"
    assert len(snap["barriers"]) == 11  # ten obstacles plus the velocity bound
    assert snap["barriers"][-1]["kind"] == "velocity-bound"


def test_init_validation_errors(core):
    assert "unknown model" in err(send(core, "init", {"model": "unicycle"}))
    assert "gamma" in err(
        send(core, "init", {"model": "single-integrator", "family": "cbf",
                            "gamma": 0.0})
    )
    assert "gamma1" in err(
        send(core, "init", {"model": "double-integrator", "family": "hocbf"})
    )
    assert "seed" in err(send(core, "init", {"seed": -1}))
    assert "seed" in err(send(core, "init", {"seed": True}))
    assert "family" in err(
        send(core, "init", {"model": "single-integrator", "family": "warp"})
    )


def test_init_explicit_environment_echo(core):
    doc = demo_environment()
    snap = start(core, gamma1=5.0, gamma2=5.0, environment=doc)
    assert snap["environment"] == doc
    assert snap["x"] == [5.0, 5.0, 0.0, 0.0]
    assert len(snap["barriers"]) == 2  # the circle plus the velocity bound


def test_init_environment_model_mismatch(core):
    doc = demo_environment()
    reply = send(
        core, "init",
        {"model": "single-integrator", "family": "cbf", "gamma": 1.0,
         "environment": doc},
    )
    assert "does not match" in err(reply)


def test_init_environment_garbage(core):
    assert "bad environment" in err(send(core, "init", {
        "model": "double-integrator", "family": "hocbf",
        "gamma1": 1.0, "gamma2": 1.0, "environment": {"x": 1},
    }))
    bad = demo_environment()
    bad["obstacle_centers"] = [[0.0, 5.0], [1.0]]
    assert "bad environment" in err(send(core, "init", {
        "model": "double-integrator", "family": "hocbf",
        "gamma1": 1.0, "gamma2": 1.0, "environment": bad,
    }))


def test_set_state_validation(core):
    sid = start(core)["session"]
    assert "missing field" in err(send(core, "set_state", {}, sid))
    assert "dimension" in err(send(core, "set_state", {"x": [1, 2]}, sid))
    assert "finite" in err(
        send(core, "set_state", {"x": [1, 2, float("nan"), 0]}, sid)
    )
    assert "numeric" in err(send(core, "set_state", {"x": ["a", "b", 1, 2]}, sid))
    snap = ok(send(core, "set_state", {"x": [1.0, 2.0, 0.5, 0.0]}, sid))
    assert snap["x"] == [1.0, 2.0, 0.5, 0.0]


def test_gain_flip_turns_infeasible_state_feasible(core):
    # heading into a wall-adjacent obstacle at speed: aggressive second-order
    # gains leave no admissible input, gentle ones keep the filter feasible
    x = [0.66, 5.0, -3.0, 0.0]
    sid = start(core, gamma1=5.0, gamma2=5.0, environment=demo_environment())[
        "session"
    ]
    ok(send(core, "set_state", {"x": x}, sid))
    hard = ok(send(core, "query_input_set", {}, sid))
    assert hard["feasible"] is False
    assert hard["u"] is None

    ok(send(core, "set_params", {"gamma1": 1.0, "gamma2": 1.0}, sid))
    soft = ok(send(core, "query_input_set", {}, sid))
    assert soft["feasible"] is True
    assert np.all(np.abs(soft["u"]) <= 5.0 + 1e-12)

    di = models.double_integrator()
    circle = barriers.circle_obstacle((0.0, 5.0), 0.65, di)
    state = np.asarray(x)
    assert certify.pointwise_margin(di, circle, (5.0, 5.0), state) == pytest.approx(
        -14.6725, rel=1e-9
    )
    assert certify.pointwise_margin(di, circle, (1.0, 1.0), state) == pytest.approx(
        16.6931, rel=1e-9
    )


def test_step_validation_and_records(core):
    sid = start(core, seed=5)["session"]
    assert "count" in err(send(core, "step", {"count": 0}, sid))
    assert "count" in err(send(core, "step", {"count": bridge.MAX_STEP_COUNT + 1}, sid))
    assert "count" in err(send(core, "step", {"count": True}, sid))
    assert "count" in err(send(core, "step", {"count": 2.5}, sid))
    out = ok(send(core, "step", {"count": 3}, sid))
    assert len(out["records"]) == 3
    assert out["t"] == pytest.approx(3 * 0.01)
    rec = out["records"][0]
    assert set(rec) == {"t", "x", "u", "h", "feasible", "clearance"}
    assert out["x"] == out["records"][-1]["x"]


def test_unknown_session_and_type(core):
    assert "unknown session" in err(send(core, "step", {"count": 1}, "s99"))
    assert "unknown message type" in err(send(core, "warp", {}, "s0"))


def test_bridge_trace_matches_bench_bitwise(core):
    config = TrialConfig(
        system=models.SINGLE_INTEGRATOR, family="cbf", seed=7, gamma=1.0
    )
    env = config.sample_environment()
    result, trace = bench.run_trial(config, env=env, collect_trace=True)

    sid = start(
        core, model="single-integrator", family="cbf", gamma=1.0,
        environment=env.to_json(),
    )["session"]
    records = []
    while len(records) < config.sim.max_steps:
        out = ok(send(core, "step", {"count": bridge.MAX_STEP_COUNT}, sid))
        records.extend(out["records"])
        if out["reached_goal"]:
            break
    assert out["reached_goal"] == result.reached_goal
    assert len(records) == result.steps_used == len(trace)
    assert records == trace  # bit-for-bit, not approximately


def test_session_isolation(core):
    sid_a = start(core, seed=1)["session"]
    sid_b = start(core, seed=2)["session"]
    assert sid_a != sid_b
    ok(send(core, "step", {"count": 5}, sid_a))
    trace_a = ok(send(core, "get_trace", {}, sid_a))
    trace_b = ok(send(core, "get_trace", {}, sid_b))
    assert trace_a["total_steps"] == 5 and len(trace_a["records"]) == 5
    assert trace_b["total_steps"] == 0 and trace_b["records"] == []


def test_reset(core):
    first = start(core, seed=4)
    sid = first["session"]
    ok(send(core, "step", {"count": 10}, sid))
    ok(send(core, "run", {"rate_hz": 10}, sid))
    snap = ok(send(core, "reset", {}, sid))
    assert snap["steps"] == 0
    assert snap["x"] == first["x"]
    assert snap["running"] is False
    assert ok(send(core, "get_trace", {}, sid))["records"] == []


def test_get_trace_ring_and_count(core, monkeypatch):
    monkeypatch.setattr(bridge, "TRACE_RING", 16)
    sid = start(core, seed=5)["session"]
    ok(send(core, "step", {"count": 20}, sid))
    out = ok(send(core, "get_trace", {}, sid))
    assert out["total_steps"] == 20
    assert len(out["records"]) == 16  # ring keeps only the newest entries
    assert out["records"][0]["t"] == pytest.approx(5 * 0.01)
    last4 = ok(send(core, "get_trace", {"count": 4}, sid))
    assert last4["records"] == out["records"][-4:]
    assert "count" in err(send(core, "get_trace", {"count": 0}, sid))


def test_set_params_preserves_state_and_counters(core):
    sid = start(core, seed=6)["session"]
    before = ok(send(core, "step", {"count": 50}, sid))
    snap = ok(send(core, "set_params", {"gamma1": 3.0, "gamma2": 0.5}, sid))
    assert snap["steps"] == 50
    assert snap["x"] == before["x"]
    assert snap["filter"]["gamma1"] == 3.0
    assert snap["filter"]["gamma2"] == 0.5
    trace = ok(send(core, "get_trace", {}, sid))
    assert trace["total_steps"] == 50 and len(trace["records"]) == 50

    snap = ok(send(core, "set_params", {"family": "naive"}, sid))
    assert snap["filter"]["family"] == "naive-rd2"
    assert "changes nothing" in err(send(core, "set_params", {}, sid))
    assert "must be a number" in err(
        send(core, "set_params", {"gamma": True}, sid)
    )
    assert "family" in err(send(core, "set_params", {"family": "warp"}, sid))


def test_query_input_set_far_from_obstacles(core):
    sid = start(
        core, model="single-integrator", family="cbf", gamma=1.0,
        environment={**demo_environment(), "model": models.SINGLE_INTEGRATOR,
                     "start_state": [9.0, 9.0]},
    )["session"]
    out = ok(send(core, "query_input_set", {}, sid))
    assert out["box"] == [5.0, 5.0]
    assert len(out["rows"]) == 1
    assert out["feasible"] is True
    # far from every barrier, the filter passes the nominal input through
    expected = qp.solve_arrays(
        np.asarray(out["u_nom"]),
        np.asarray([r["a"] for r in out["rows"]]),
        np.asarray([r["b"] for r in out["rows"]]),
        np.asarray([5.0, 5.0]),
    )
    assert out["u"] == expected.u_star.tolist()
    assert out["u"] == out["u_nom"]


def test_query_input_set_naive_rd2_box_is_null(core):
    sid = start(core, family="naive-rd2")["session"]
    out = ok(send(core, "query_input_set", {}, sid))
    assert out["box"] == [None, None]


def test_query_feasibility_field_validation(core):
    sid = start(core)["session"]
    good_axes = [[0.0, 10.0, 5], [0.0, 10.0, 5]]
    assert "missing field" in err(send(core, "query_feasibility_field", {}, sid))
    for dims in ([0, 0], [0, 7], [0], [0, 1, 2], ["a", 1]):
        reply = send(
            core, "query_feasibility_field", {"dims": dims, "axes": good_axes}, sid
        )
        assert "dims" in err(reply)
    for axes in (
        [[0, 10, 1], [0, 10, 5]],  # count < 2
        [[10, 0, 5], [0, 10, 5]],  # hi <= lo
        [[0, 10, 5]],  # wrong arity
        [[0, "x", 5], [0, 10, 5]],
        [[0.0, 10.0, 500], [0.0, 10.0, 500]],  # over the resolution cap
    ):
        reply = send(
            core, "query_feasibility_field", {"dims": [0, 1], "axes": axes}, sid
        )
        assert err(reply)


def test_query_feasibility_field_rejects_naive_families(core):
    sid = start(core, family="naive-rd2")["session"]
    reply = send(
        core, "query_feasibility_field",
        {"dims": [0, 2], "axes": [[0, 10, 4], [-5, 5, 4]]}, sid,
    )
    assert "cbf and hocbf" in err(reply)


def test_query_feasibility_field_values(core):
    sid = start(core, seed=2)["session"]
    out = ok(send(
        core, "query_feasibility_field",
        {"dims": [0, 2], "axes": [[0.0, 10.0, 12], [-5.0, 5.0, 9]]}, sid,
    ))
    assert out["shape"] == [12, 9]
    assert len(out["axes"][0]) == 12 and len(out["axes"][1]) == 9
    field = np.asarray(out["margins"])
    assert field.shape == (12, 9)
    assert np.all(np.isfinite(field))

    # spot-check three cells against the direct margin computation
    session = bridge_session(core, sid)
    for i, j in ((0, 0), (5, 3), (11, 8)):
        state = session.engine.x.copy()
        state[0] = out["axes"][0][i]
        state[2] = out["axes"][1][j]
        direct = certify.min_margin(
            session.engine.model,
            session.engine.barriers,
            (session.engine.spec.gamma1, session.engine.spec.gamma2),
            state[None, :],
        )[0]
        assert field[i, j] == pytest.approx(direct, rel=1e-12)


def bridge_session(core, sid):
    return core.sessions[sid]


def test_run_pause_tick(core):
    sid = start(core, seed=8)["session"]
    assert bridge.BridgeCore().tick(sid) is None  # unknown sid elsewhere
    assert core.tick(sid) is None  # not running yet
    assert "rate_hz" in err(send(core, "run", {"rate_hz": 0.5}, sid))
    out = ok(send(core, "run", {"rate_hz": 100}, sid))
    assert out == {"running": True, "rate_hz": 100.0}
    stream = core.tick(sid)
    assert stream["type"] == "stream"
    assert stream["session"] == sid
    assert len(stream["records"]) == 1
    assert stream["done"] is False
    out = ok(send(core, "pause", {}, sid))
    assert out["running"] is False and out["steps"] == 1
    assert core.tick(sid) is None


def test_tick_stops_at_goal(core):
    config = TrialConfig(
        system=models.SINGLE_INTEGRATOR, family="cbf", seed=7, gamma=1.0
    )
    env = config.sample_environment()
    sid = start(
        core, model="single-integrator", family="cbf", gamma=1.0,
        environment=env.to_json(),
    )["session"]
    for _ in range(3):
        out = ok(send(core, "step", {"count": bridge.MAX_STEP_COUNT}, sid))
        if out["reached_goal"]:
            break
    assert out["reached_goal"] is True
    ok(send(core, "run", {}, sid))
    stream = core.tick(sid)
    assert stream["done"] is True
    assert bridge_session(core, sid).running is False


json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(-10, 10)
    | st.floats(allow_nan=False, allow_infinity=False, width=32)
    | st.text(max_size=8),
    lambda children: st.lists(children, max_size=3)
    | st.dictionaries(st.text(max_size=8), children, max_size=3),
    max_leaves=8,
)

known_tags = st.sampled_from(sorted(bridge.BridgeCore._HANDLERS) + ["junk"])


@given(
    tag=known_tags,
    msg_id=json_values,
    session=json_values,
    payload=json_values,
)
@settings(max_examples=120, deadline=None)
def test_handle_total_on_arbitrary_messages(tag, msg_id, session, payload):
    core = bridge.BridgeCore()
    sid = ok(send(core, "init", {"model": "single-integrator", "family": "cbf",
                                 "gamma": 1.0, "seed": 0}))["session"]
    msg = {"type": tag, "id": msg_id, "session": session, "payload": payload}
    reply = core.handle(msg)
    assert isinstance(reply, dict)
    assert reply["type"] == "reply"
    assert isinstance(reply["ok"], bool)
    if not reply["ok"]:
        assert isinstance(reply["error"], str)
    # a live session keeps answering correctly afterwards
    out = ok(send(core, "step", {"count": 1}, sid))
    assert len(out["records"]) == 1


def test_handle_non_dict_messages(core):
    for junk in (None, 7, "init", [1, 2], True):
        reply = core.handle(junk)
        assert reply["ok"] is False
        assert "JSON object" in reply["error"]
