"""WebSocket transport for the playground bridge.

One process hosts many sessions; each WebSocket connection owns the
sessions it creates. Frames are JSON texts, one message per frame (the
frame is the length delimiter). Replies go back on the same connection;
run-mode stream batches are pushed as separate frames between replies at
the session's rate.
"""

from __future__ import annotations

import asyncio
import json

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .bridge import BridgeCore


def build_app(static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="cbf-workbench playground")
    core = BridgeCore()
    app.state.core = core

    @app.get("/health")
    async def health():
        return {"status": "ok", "sessions": len(core.sessions)}

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        send_lock = asyncio.Lock()
        runners: dict[str, asyncio.Task] = {}

        async def send(doc: dict):
            async with send_lock:
                await socket.send_text(json.dumps(doc))

        async def pump(sid: str):
            try:
                while True:
                    session = core.sessions.get(sid)
                    if session is None or not session.running:
                        return
                    batch = core.tick(sid)
                    if batch is None:
                        return
                    await send(batch)
                    if batch["done"]:
                        return
                    await asyncio.sleep(1.0 / session.rate_hz)
            except WebSocketDisconnect:
                pass

        def manage_runner(message: dict):
            sid = message.get("session")
            if not isinstance(sid, str):
                return
            session = core.sessions.get(sid)
            if session is None:
                return
            task = runners.get(sid)
            if session.running and (task is None or task.done()):
                runners[sid] = asyncio.get_running_loop().create_task(pump(sid))

        try:
            while True:
                raw = await socket.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError as exc:
                    await send(
                        {
                            "type": "reply",
                            "id": None,
                            "ok": False,
                            "error": f"bad JSON frame: {exc.msg}",
                        }
                    )
                    continue
                reply = core.handle(message)
                await send(reply)
                if isinstance(message, dict):
                    manage_runner(message)
        except WebSocketDisconnect:
            pass
        finally:
            for task in runners.values():
                task.cancel()

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="frontend")

    return app
