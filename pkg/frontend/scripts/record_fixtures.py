"""Regenerate the recorded-protocol fixtures under tests/fixtures/.

Drives the real bridge core through the same scripted action sequences the
frontend tests replay, mirroring the message composition in src/actions.ts
(ids, payloads, overlay-refresh ordering). The tests then assert that the
TypeScript pipeline derives exactly these requests and that the recorded
replies render the expected scene; any drift between the two pipelines shows
up as a fixture mismatch.

Run from the repository root:

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from cbf_workbench.bridge import BridgeCore

FIELD_RESOLUTION = 25
FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SINGLE_INTEGRATOR = "single-integrator-2d"
DOUBLE_INTEGRATOR = "double-integrator-2d"
MANIPULATOR = "planar-manipulator-3dof"


def default_field_query(snapshot: dict) -> dict:
    workspace = snapshot["environment"]["workspace"]
    kind = snapshot["model"]["kind"]
    if kind == DOUBLE_INTEGRATOR:
        v_max = snapshot["v_max"] if snapshot["v_max"] is not None else 5
        return {
            "dims": [0, 2],
            "axes": [
                [0, workspace, FIELD_RESOLUTION],
                [-v_max, v_max, FIELD_RESOLUTION],
            ],
        }
    if kind == MANIPULATOR:
        return {
            "dims": [0, 1],
            "axes": [
                [-math.pi, math.pi, FIELD_RESOLUTION],
                [-math.pi, math.pi, FIELD_RESOLUTION],
            ],
        }
    return {
        "dims": [0, 1],
        "axes": [
            [0, workspace, FIELD_RESOLUTION],
            [0, workspace, FIELD_RESOLUTION],
        ],
    }


class ScriptRunner:
    """Mirror of the frontend action pipeline against a live bridge core."""

    def __init__(self) -> None:
        self.core = BridgeCore()
        self.events: list[dict] = []
        self.next_id = 1
        self.snapshot: dict | None = None
        self.overlays = {"inputSet": False, "field": False}
        self.rate_hz = 50

    # -- plumbing -----------------------------------------------------------

    def _alloc(self) -> int:
        out = self.next_id
        self.next_id += 1
        return out

    def _request(self, rtype: str, payload: dict, with_session: bool = True) -> dict:
        msg: dict = {"type": rtype, "id": self._alloc(), "payload": payload}
        if with_session:
            assert self.snapshot is not None
            msg["session"] = self.snapshot["session"]
        return msg

    def _exchange(self, msg: dict) -> dict:
        reply = self.core.handle(msg)
        self.events.append({"kind": "exchange", "request": msg, "reply": reply})
        if reply["ok"]:
            self._mirror(msg["type"], reply["result"])
        return reply

    def _mirror(self, tag: str, result: dict) -> None:
        """Track the snapshot fields the action pipeline reads (x, session,
        environment, filter, v_max), the same way state.ts does."""
        if tag in ("init", "set_params", "set_state", "reset"):
            self.snapshot = result
        elif tag == "step" and self.snapshot is not None:
            self.snapshot = {**self.snapshot, "x": result["x"], "t": result["t"]}

    def _overlay_refreshes(self) -> None:
        assert self.snapshot is not None
        if self.overlays["field"]:
            self._exchange(
                self._request(
                    "query_feasibility_field", dict(default_field_query(self.snapshot))
                )
            )
        if self.overlays["inputSet"]:
            self._exchange(self._request("query_input_set", {}))

    # -- script events --------------------------------------------------------

    def local(self, name: str, value: float) -> None:
        self.events.append({"kind": "local", "name": name, "value": value})
        if name == "rateHz":
            self.rate_hz = value

    def action(self, action: dict) -> None:
        self.events.append({"kind": "action", "action": action})
        kind = action["kind"]
        if kind == "connect":
            payload: dict = {
                "model": action["model"],
                "family": action["family"],
                "seed": action["seed"],
            }
            for src, dst in (
                ("gamma", "gamma"),
                ("gamma1", "gamma1"),
                ("gamma2", "gamma2"),
                ("vMax", "v_max"),
                ("environment", "environment"),
            ):
                if src in action:
                    payload[dst] = action[src]
            self._exchange(
                {"type": "init", "id": self._alloc(), "payload": payload}
            )
        elif kind == "toggle-overlay":
            if action["name"] in self.overlays:
                self.overlays[action["name"]] = action["on"]
            if not action["on"]:
                return
            if action["name"] == "field":
                assert self.snapshot is not None
                self._exchange(
                    self._request(
                        "query_feasibility_field",
                        dict(default_field_query(self.snapshot)),
                    )
                )
            elif action["name"] == "inputSet":
                self._exchange(self._request("query_input_set", {}))
        elif kind == "slider-commit":
            self._exchange(
                self._request("set_params", {action["name"]: action["value"]})
            )
            self._overlay_refreshes()
        elif kind == "family-commit":
            self._exchange(self._request("set_params", {"family": action["family"]}))
            self._overlay_refreshes()
        elif kind == "step":
            self._exchange(self._request("step", {"count": 1}))
        elif kind == "drag-robot":
            assert self.snapshot is not None
            x = list(self.snapshot["x"])
            x[0], x[1] = action["position"]
            self._exchange(self._request("set_state", {"x": x}))
            self._overlay_refreshes()
        elif kind == "drag-velocity":
            assert self.snapshot is not None
            x = list(self.snapshot["x"])
            x[2], x[3] = action["velocity"]
            self._exchange(self._request("set_state", {"x": x}))
            self._overlay_refreshes()
        elif kind == "run":
            self._exchange(self._request("run", {"rate_hz": self.rate_hz}))
        elif kind == "pause":
            self._exchange(self._request("pause", {}))
            self._overlay_refreshes()
        elif kind == "reset":
            self._exchange(self._request("reset", {}))
            self._overlay_refreshes()
        elif kind == "fetch-trace":
            self._exchange(self._request("get_trace", {"count": action["count"]}))
        else:
            raise ValueError(f"unknown scripted action {kind!r}")

    def stream_ticks(self, count: int) -> None:
        assert self.snapshot is not None
        sid = self.snapshot["session"]
        for _ in range(count):
            frame = self.core.tick(sid)
            if frame is None:
                break
            self.events.append({"kind": "stream", "frame": frame})
            records = frame["records"]
            if records and self.snapshot is not None:
                self.snapshot = {
                    **self.snapshot,
                    "x": records[-1]["x"],
                    "t": records[-1]["t"],
                }

    def extra_exchange(self, rtype: str, payload: dict) -> dict:
        """Protocol exchange outside the action script (reducer-only tests)."""
        msg = self._request(rtype, payload)
        reply = self.core.handle(msg)
        return {"request": msg, "reply": reply}


def record_double_integrator() -> dict:
    r = ScriptRunner()
    r.local("rateHz", 100)
    r.action(
        {
            "kind": "connect",
            "model": DOUBLE_INTEGRATOR,
            "family": "hocbf",
            "seed": 7,
            "gamma1": 1,
            "gamma2": 1,
            "vMax": 5,
        }
    )
    assert r.snapshot is not None
    obstacle0 = r.snapshot["environment"]["obstacle_centers"][0]
    r.action({"kind": "toggle-overlay", "name": "inputSet", "on": True})
    r.action({"kind": "toggle-overlay", "name": "field", "on": True})
    r.action({"kind": "slider-commit", "name": "gamma1", "value": 5})
    r.action({"kind": "slider-commit", "name": "gamma2", "value": 5})
    r.action({"kind": "step"})
    r.action({"kind": "step"})
    r.action({"kind": "step"})
    r.action({"kind": "drag-robot", "position": [obstacle0[0], obstacle0[1]]})
    r.action({"kind": "step"})
    r.action({"kind": "run"})
    r.stream_ticks(2)
    r.action({"kind": "pause"})
    r.action({"kind": "reset"})
    r.action({"kind": "fetch-trace", "count": 5})
    extras = [
        r.extra_exchange("set_params", {}),
        r.extra_exchange("step", {"count": 0}),
    ]
    return {"name": "di-hocbf", "script": r.events, "extras": extras}


def record_single_integrator() -> dict:
    r = ScriptRunner()
    r.action(
        {
            "kind": "connect",
            "model": SINGLE_INTEGRATOR,
            "family": "cbf",
            "seed": 3,
            "gamma": 1,
        }
    )
    r.action({"kind": "toggle-overlay", "name": "field", "on": True})
    r.action({"kind": "toggle-overlay", "name": "inputSet", "on": True})
    r.action({"kind": "step"})
    return {"name": "si-cbf", "script": r.events, "extras": []}


def record_manipulator() -> dict:
    r = ScriptRunner()
    r.action(
        {
            "kind": "connect",
            "model": MANIPULATOR,
            "family": "cbf",
            "seed": 5,
            "gamma": 1,
        }
    )
    r.action({"kind": "step"})
    r.action({"kind": "toggle-overlay", "name": "contours", "on": True})
    return {"name": "arm-cbf", "script": r.events, "extras": []}


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    fixtures = {
        "session_di.json": record_double_integrator(),
        "session_si.json": record_single_integrator(),
        "session_arm.json": record_manipulator(),
    }
    for filename, doc in fixtures.items():
        path = FIXTURE_DIR / filename
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
