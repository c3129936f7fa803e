"""Playground session protocol, transport-agnostic core.

All physics stays here (and in the modules this imports); the frontend is a
renderer. Messages are JSON objects:

    request:  {"type": <tag>, "id": <int>, "session": <sid>, "payload": {...}}
    reply:    {"type": "reply", "id": <echoed>, "ok": true, "result": {...}}
              {"type": "reply", "id": <echoed>, "ok": false, "error": "..."}
    stream:   {"type": "stream", "session": <sid>, "records": [...], "done": bool}

Every request gets exactly one reply; malformed input produces an error
reply and never corrupts a session. init creates a session and returns the
handshake (protocol_version, supported models/families, full snapshot).
Stepping delegates to bench.TrialEngine, so a scripted session reproduces a
bench trace bit for bit. run/pause toggle a flag; the transport layer calls
tick() at the client-chosen rate to emit stream batches.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace

import numpy as np

from . import filters, models, world
from .bench import TrialConfig, TrialEngine
from .models import DOUBLE_INTEGRATOR

PROTOCOL_VERSION = 1
TRACE_RING = 5000
MAX_STEP_COUNT = 1000
MAX_FIELD_CELLS = 200 * 200

_SYSTEM_ALIASES = {
    "single-integrator": models.SINGLE_INTEGRATOR,
    "double-integrator": models.DOUBLE_INTEGRATOR,
    "manipulator": models.MANIPULATOR,
}


class ProtocolError(Exception):
    """Client-visible failure; the message is returned in the error reply."""


class Session:
    def __init__(self, sid: str, config: TrialConfig, env: world.Environment):
        self.sid = sid
        self.config = config
        self.env = env
        self.engine = TrialEngine(config, env)
        self.trace = deque(maxlen=TRACE_RING)
        self.running = False
        self.rate_hz = 50.0

    def snapshot(self) -> dict:
        engine = self.engine
        model = engine.model
        return {
            "session": self.sid,
            "model": {
                "kind": model.kind,
                "state_dim": model.state_dim,
                "input_dim": model.input_dim,
                "input_box": model.input_box.tolist(),
                "link_lengths": (
                    model.link_lengths.tolist() if model.link_lengths is not None else None
                ),
                "base": model.base.tolist() if model.base is not None else None,
            },
            "environment": self.env.to_json(),
            "filter": engine.spec.describe(),
            "v_max": self.config.v_max,
            "dt": self.config.sim.dt,
            "goal_tolerance": self.config.sim.goal_tolerance,
            "x": engine.x.tolist(),
            "t": engine.steps * self.config.sim.dt,
            "steps": engine.steps,
            "running": self.running,
            "collided": engine.collided,
            "reached_goal": engine.reached_goal,
            "infeasible_steps": engine.infeasible_steps,
            "min_clearance": engine.min_clearance,
            "barriers": [b.describe() for b in engine.barriers],
        }

    def rebuild_engine(self, **config_changes) -> None:
        """Swap filter parameters without touching state or history."""
        old = self.engine
        self.config = replace(self.config, **config_changes)
        engine = TrialEngine(self.config, self.env)
        engine.x = old.x
        engine.steps = old.steps
        engine.collided = old.collided
        engine.reached_goal = old.reached_goal
        engine.infeasible_steps = old.infeasible_steps
        engine.min_clearance = old.min_clearance
        engine._vals = engine._values(engine.x)
        self.engine = engine


def _require(payload: dict, key: str):
    if key not in payload:
        raise ProtocolError(f"missing field {key!r}")
    return payload[key]


def _finite_vector(value, dim: int, name: str) -> np.ndarray:
    try:
        vec = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ProtocolError(f"{name} must be a numeric vector") from None
    if vec.shape != (dim,):
        raise ProtocolError(f"{name} must have dimension {dim}")
    if not np.all(np.isfinite(vec)):
        raise ProtocolError(f"{name} must be finite")
    return vec


class BridgeCore:
    """Holds sessions and processes one message at a time."""

    def __init__(self):
        self.sessions: dict[str, Session] = {}
        self._next_sid = 0

    # -- plumbing ---------------------------------------------------------

    def handle(self, message) -> dict:
        """Process one request; always returns exactly one reply dict."""
        msg_id = message.get("id") if isinstance(message, dict) else None
        if not isinstance(msg_id, (int, float)) or isinstance(msg_id, bool):
            msg_id = None
        try:
            if not isinstance(message, dict):
                raise ProtocolError("message must be a JSON object")
            tag = message.get("type")
            handler = self._HANDLERS.get(tag)
            if handler is None:
                raise ProtocolError(f"unknown message type {tag!r}")
            payload = message.get("payload") or {}
            if not isinstance(payload, dict):
                raise ProtocolError("payload must be an object")
            if tag == "init":
                result = handler(self, payload)
            else:
                result = handler(self, self._session(message), payload)
            return {"type": "reply", "id": msg_id, "ok": True, "result": result}
        except ProtocolError as exc:
            return {"type": "reply", "id": msg_id, "ok": False, "error": str(exc)}
        except Exception as exc:  # totality: never crash the service
            return {
                "type": "reply",
                "id": msg_id,
                "ok": False,
                "error": f"internal error: {type(exc).__name__}: {exc}",
            }

    def _session(self, message: dict) -> Session:
        sid = message.get("session")
        session = self.sessions.get(sid)
        if session is None:
            raise ProtocolError(f"unknown session {sid!r}")
        return session

    # -- handlers ---------------------------------------------------------

    def _handle_init(self, payload: dict) -> dict:
        kind = payload.get("model", DOUBLE_INTEGRATOR)
        kind = _SYSTEM_ALIASES.get(kind, kind)
        if kind not in models.KNOWN_KINDS:
            raise ProtocolError(f"unknown model {kind!r}")
        family = payload.get("family", "cbf")
        if family == "naive":
            family = "naive-rd2" if kind == DOUBLE_INTEGRATOR else "naive-rd1"
        seed = payload.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ProtocolError("seed must be a nonnegative integer")
        v_max = payload.get("v_max")
        if kind == DOUBLE_INTEGRATOR and v_max is None:
            v_max = 5.0
        try:
            config = TrialConfig(
                system=kind,
                family=family,
                seed=seed,
                gamma=payload.get("gamma"),
                gamma1=payload.get("gamma1"),
                gamma2=payload.get("gamma2"),
                v_max=v_max,
            )
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None
        if "environment" in payload:
            try:
                env = world.environment_from_json(payload["environment"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"bad environment: {exc}") from None
            if env.model_kind != kind:
                raise ProtocolError("environment model does not match init model")
        else:
            env = config.sample_environment()
        sid = f"s{self._next_sid}"
        self._next_sid += 1
        try:
            session = Session(sid, config, env)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None
        self.sessions[sid] = session
        out = session.snapshot()
        out["protocol_version"] = PROTOCOL_VERSION
        out["supported_models"] = sorted(models.KNOWN_KINDS)
        out["supported_families"] = list(filters.FAMILIES)
        return out

    def _handle_set_params(self, session: Session, payload: dict) -> dict:
        changes = {}
        for key in ("gamma", "gamma1", "gamma2", "v_max"):
            if key in payload:
                value = payload[key]
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ProtocolError(f"{key} must be a number")
                changes[key] = float(value)
        if "family" in payload:
            family = payload["family"]
            if family == "naive":
                family = (
                    "naive-rd2"
                    if session.engine.model.kind == DOUBLE_INTEGRATOR
                    else "naive-rd1"
                )
            changes["family"] = family
        if not changes:
            raise ProtocolError("set_params changes nothing")
        try:
            session.rebuild_engine(**changes)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None
        return session.snapshot()

    def _handle_set_state(self, session: Session, payload: dict) -> dict:
        vec = _finite_vector(
            _require(payload, "x"), session.engine.model.state_dim, "x"
        )
        engine = session.engine
        engine.x = vec
        engine._vals = engine._values(vec)
        return session.snapshot()

    def _step_batch(self, session: Session, count: int):
        records = []
        for _ in range(count):
            record = session.engine.step_once()
            session.trace.append(record)
            records.append(record)
            if session.engine.reached_goal:
                break
        return records

    def _handle_step(self, session: Session, payload: dict) -> dict:
        count = payload.get("count", 1)
        if not isinstance(count, int) or isinstance(count, bool):
            raise ProtocolError("count must be an integer")
        if not 1 <= count <= MAX_STEP_COUNT:
            raise ProtocolError(f"count must be in [1, {MAX_STEP_COUNT}]")
        records = self._step_batch(session, count)
        return {
            "records": records,
            "x": session.engine.x.tolist(),
            "t": session.engine.steps * session.config.sim.dt,
            "collided": session.engine.collided,
            "reached_goal": session.engine.reached_goal,
        }

    def _handle_run(self, session: Session, payload: dict) -> dict:
        rate = payload.get("rate_hz", 50.0)
        if not isinstance(rate, (int, float)) or isinstance(rate, bool):
            raise ProtocolError("rate_hz must be a number")
        if not 1.0 <= float(rate) <= 1000.0:
            raise ProtocolError("rate_hz must be in [1, 1000]")
        session.rate_hz = float(rate)
        session.running = True
        return {"running": True, "rate_hz": session.rate_hz}

    def _handle_pause(self, session: Session, payload: dict) -> dict:
        session.running = False
        return {"running": False, "steps": session.engine.steps}

    def _handle_reset(self, session: Session, payload: dict) -> dict:
        session.engine = TrialEngine(session.config, session.env)
        session.trace.clear()
        session.running = False
        return session.snapshot()

    def _handle_get_trace(self, session: Session, payload: dict) -> dict:
        count = payload.get("count", TRACE_RING)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ProtocolError("count must be a positive integer")
        records = list(session.trace)[-count:]
        return {"records": records, "total_steps": session.engine.steps}

    def _handle_query_feasibility_field(self, session: Session, payload: dict) -> dict:
        engine = session.engine
        spec = engine.spec
        if spec.family == "cbf":
            gains = spec.gamma
        elif spec.family == "hocbf":
            gains = (spec.gamma1, spec.gamma2)
        else:
            raise ProtocolError(
                "feasibility field is defined for the cbf and hocbf families"
            )
        dims = _require(payload, "dims")
        axes = _require(payload, "axes")
        n = engine.model.state_dim
        if (
            not isinstance(dims, (list, tuple))
            or len(dims) != 2
            or not all(isinstance(d, int) and 0 <= d < n for d in dims)
            or dims[0] == dims[1]
        ):
            raise ProtocolError("dims must be two distinct state indices")
        if not isinstance(axes, (list, tuple)) or len(axes) != 2:
            raise ProtocolError("axes must give (lo, hi, count) per dim")
        counts = []
        grids = []
        for axis in axes:
            try:
                lo, hi, count = float(axis[0]), float(axis[1]), int(axis[2])
            except (TypeError, ValueError, IndexError):
                raise ProtocolError("axes must give (lo, hi, count) per dim") from None
            if count < 2 or hi <= lo:
                raise ProtocolError("each axis needs lo < hi and count >= 2")
            counts.append(count)
            grids.append(np.linspace(lo, hi, count))
        if counts[0] * counts[1] > MAX_FIELD_CELLS:
            raise ProtocolError(f"field resolution cap is {MAX_FIELD_CELLS} cells")
        mesh_a, mesh_b = np.meshgrid(grids[0], grids[1], indexing="ij")
        states = np.broadcast_to(engine.x, (mesh_a.size, n)).copy()
        states[:, dims[0]] = mesh_a.ravel()
        states[:, dims[1]] = mesh_b.ravel()
        from . import certify

        margins = certify.min_margin(engine.model, engine.barriers, gains, states)
        return {
            "dims": list(dims),
            "shape": counts,
            "axes": [g.tolist() for g in grids],
            "margins": margins.reshape(counts).tolist(),
        }

    def _handle_query_input_set(self, session: Session, payload: dict) -> dict:
        engine = session.engine
        A, b = engine.rows_at(engine.x)
        u_nom = engine._nominal(engine.x, engine._vals)
        from . import qp

        out = qp.solve_arrays(u_nom, A, b, engine.box)
        feasible = out.status == qp.OPTIMAL
        # an unbounded box entry (two-step lookahead family) serializes as
        # null; strict JSON has no Infinity
        box = [float(v) if np.isfinite(v) else None for v in engine.box]
        return {
            "rows": [{"a": a.tolist(), "b": float(bi)} for a, bi in zip(A, b)],
            "box": box,
            "u_nom": u_nom.tolist(),
            "u": out.u_star.tolist() if feasible else None,
            "feasible": feasible,
        }

    # -- run-mode pump ------------------------------------------------------

    def tick(self, sid: str):
        """One running-mode step batch; None when the session is idle.

        The transport layer calls this at session.rate_hz while running.
        """
        session = self.sessions.get(sid)
        if session is None or not session.running:
            return None
        records = self._step_batch(session, 1)
        done = session.engine.reached_goal
        if done:
            session.running = False
        return {
            "type": "stream",
            "session": sid,
            "records": records,
            "done": done,
        }

    _HANDLERS = {
        "init": _handle_init,
        "set_params": _handle_set_params,
        "set_state": _handle_set_state,
        "step": _handle_step,
        "run": _handle_run,
        "pause": _handle_pause,
        "reset": _handle_reset,
        "get_trace": _handle_get_trace,
        "query_feasibility_field": _handle_query_feasibility_field,
        "query_input_set": _handle_query_input_set,
    }
