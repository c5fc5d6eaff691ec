"""Newline-delimited JSON service: TCP server, stdio mode, and a test client.

Each request is one UTF-8 JSON line ``{"request_id", "verb", "payload"}``;
each response echoes the request_id with ``"status"`` of ``"ok"`` or
``"error"``. Connections that sent Subscribe additionally receive push lines
``{"push": "events" | "frames", ...}`` after each of their own requests.
Responses never carry raw 64-bit hashes as JSON numbers; they travel as
decimal strings so double-precision clients keep every bit.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable

from playroom.catalog import Catalog, default_catalog
from playroom.errors import (
    BadCommand,
    BindFailure,
    Busy,
    PlayroomError,
    ProtocolError,
    SchemaError,
    UnknownSession,
)
from playroom.lessons import Registry, default_registry
from playroom.sensors import frame_to_doc, render_all
from playroom.session import Session
from playroom.world import GridSpec

DEFAULT_SESSION_LIMIT = 8


class Service:
    """Session registry shared by every connection of one server."""

    def __init__(
        self,
        session_limit: int = DEFAULT_SESSION_LIMIT,
        catalog: Catalog | None = None,
        registry: Registry | None = None,
    ):
        if session_limit < 1:
            raise BadCommand("session limit must be at least 1")
        self.session_limit = session_limit
        self.catalog = catalog or default_catalog()
        self.registry = registry or default_registry()
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._next_session = 0

    def create_session(self, payload: dict) -> Session:
        seed = payload.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SchemaError("seed must be an integer")
        n_interactable = payload.get("n_interactable", 10)
        if not isinstance(n_interactable, int) or n_interactable < 0:
            raise SchemaError("n_interactable must be a non-negative integer")
        grid = None
        grid_doc = payload.get("grid")
        if grid_doc is not None:
            if not isinstance(grid_doc, dict):
                raise SchemaError("grid must be an object")
            grid = GridSpec(
                width_cells=grid_doc.get("width_cells", 10),
                depth_cells=grid_doc.get("depth_cells", 10),
                cell_size=grid_doc.get("cell_size", 1.0),
                origin=tuple(grid_doc.get("origin", (0.0, 0.0))),
            )
        with self._lock:
            if len(self.sessions) >= self.session_limit:
                raise Busy(f"session limit {self.session_limit} reached")
            self._next_session += 1
            session_id = f"s{self._next_session}"
            session = Session(
                session_id,
                seed=seed,
                grid=grid,
                n_interactable=n_interactable,
                catalog=self.catalog,
                registry=self.registry,
            )
            self.sessions[session_id] = session
        return session

    def get(self, session_id) -> Session:
        if not isinstance(session_id, str):
            raise UnknownSession("payload must name a session_id")
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def close_session(self, session_id: str) -> None:
        with self._lock:
            self.sessions.pop(session_id, None)


@dataclass
class _Subscription:
    cursor: int
    frames_every: int | None = None
    last_frame_tick: int = -1


@dataclass
class ConnectionState:
    """Per-connection bookkeeping: id monotonicity and subscriptions."""

    last_request_id: int | None = None
    subs: dict[str, _Subscription] = field(default_factory=dict)


def _error_doc(exc: PlayroomError) -> dict:
    doc = {"code": exc.code, "message": str(exc)}
    divergent = getattr(exc, "divergent_tick", None)
    if divergent is not None:
        doc["divergent_tick"] = divergent
    return doc


def _subscribe(service: Service, conn: ConnectionState, payload: dict) -> dict:
    session = service.get(payload.get("session_id"))
    frames_every = payload.get("frames_every")
    if frames_every is not None and (
        not isinstance(frames_every, int) or frames_every < 1
    ):
        raise SchemaError("frames_every must be a positive integer")
    with session.lock:
        cursor = len(session.scene.events)
        conn.subs[session.session_id] = _Subscription(
            cursor=cursor,
            frames_every=frames_every,
            last_frame_tick=session.scene.tick,
        )
    return {"subscribed": session.session_id, "cursor": cursor}


VERBS = frozenset(
    {
        "CreateSession",
        "Reset",
        "Act",
        "Step",
        "Observe",
        "CompileLesson",
        "RunLesson",
        "GenerateTask",
        "SubmitAnswer",
        "QueryPredicate",
        "GetScene",
        "Subscribe",
    }
)


def _dispatch(service: Service, conn: ConnectionState, verb: str, payload: dict) -> dict:
    if verb not in VERBS:
        raise ProtocolError(f"unknown verb {verb!r}")
    if verb == "CreateSession":
        session = service.create_session(payload)
        with session.lock:
            return {"session_id": session.session_id, **session.get_scene()}
    if verb == "Subscribe":
        return _subscribe(service, conn, payload)
    session = service.get(payload.get("session_id"))
    with session.lock:
        if verb == "Reset":
            return session.reset(payload.get("seed"))
        if verb == "Act":
            return session.act(payload)
        if verb == "Step":
            return session.step(payload)
        if verb == "Observe":
            return session.observe(payload)
        if verb == "CompileLesson":
            return session.compile_lesson(payload)
        if verb == "RunLesson":
            return session.run_lesson(payload)
        if verb == "GenerateTask":
            return session.generate_task(payload)
        if verb == "SubmitAnswer":
            return session.submit_answer(payload)
        if verb == "QueryPredicate":
            return session.query_predicate(payload)
        if verb == "GetScene":
            return session.get_scene()
    raise ProtocolError(f"unhandled verb {verb!r}")  # pragma: no cover


def _flush_pushes(service: Service, conn: ConnectionState) -> list[dict]:
    """New events (and due frame batches) for every session this connection watches."""
    pushes: list[dict] = []
    for session_id, sub in conn.subs.items():
        session = service.sessions.get(session_id)
        if session is None:
            continue
        with session.lock:
            events = session.scene.events
            if sub.cursor < len(events):
                pushes.append(
                    {
                        "push": "events",
                        "session_id": session_id,
                        "events": [ev.to_doc() for ev in events[sub.cursor:]],
                    }
                )
                sub.cursor = len(events)
            if (
                sub.frames_every is not None
                and session.scene.tick >= sub.last_frame_tick + sub.frames_every
            ):
                try:
                    frames = render_all(
                        session.scene, session.ui_cameras, agents=session.sim.agents
                    )
                except Exception:  # noqa: BLE001 - frames are best effort
                    frames = None
                sub.last_frame_tick = session.scene.tick
                if frames is not None:
                    pushes.append(
                        {
                            "push": "frames",
                            "session_id": session_id,
                            "tick": session.scene.tick,
                            "frames": [frame_to_doc(f) for f in frames],
                        }
                    )
    return pushes


def handle_line(service: Service, conn: ConnectionState, line: str) -> list[str]:
    """One request line in, one response line plus any push lines out.

    Malformed input produces an error response, never an exception: the
    connection must survive anything a confused client writes.
    """
    request_id = None
    try:
        try:
            doc = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"bad JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ProtocolError("request must be a JSON object")
        request_id = doc.get("request_id")
        if not isinstance(request_id, int) or isinstance(request_id, bool):
            request_id = None if not isinstance(request_id, (str, float)) else request_id
            raise ProtocolError("request_id must be an integer")
        if conn.last_request_id is not None and request_id <= conn.last_request_id:
            raise ProtocolError(
                f"request_id {request_id} not above {conn.last_request_id}"
            )
        conn.last_request_id = request_id
        verb = doc.get("verb")
        if not isinstance(verb, str):
            raise ProtocolError("verb must be a string")
        payload = doc.get("payload", {})
        if not isinstance(payload, dict):
            raise ProtocolError("payload must be an object")
        result = _dispatch(service, conn, verb, payload)
        response = {"request_id": request_id, "status": "ok", "result": result}
    except PlayroomError as exc:
        response = {"request_id": request_id, "status": "error", "error": _error_doc(exc)}
    except Exception as exc:  # noqa: BLE001 - robustness contract: never crash
        response = {
            "request_id": request_id,
            "status": "error",
            "error": {"code": "InternalError", "message": f"{type(exc).__name__}: {exc}"},
        }
    # Pushes go out before the response so a blocking client sees every
    # effect of its request by the time the acknowledgement arrives.
    lines = []
    try:
        for push in _flush_pushes(service, conn):
            lines.append(json.dumps(push, separators=(",", ":"), sort_keys=True))
    except Exception:  # noqa: BLE001 - a failed push must not kill the response
        pass
    lines.append(json.dumps(response, separators=(",", ":"), sort_keys=True))
    return lines


def run_stdio(service: Service, stdin: IO[str], stdout: IO[str]) -> None:
    """Single-connection mode for subprocess embedding."""
    conn = ConnectionState()
    for line in stdin:
        if not line.strip():
            continue
        for out in handle_line(service, conn, line):
            stdout.write(out + "\n")
        stdout.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        conn = ConnectionState()
        service = self.server.playroom_service  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            try:
                for out in handle_line(service, conn, line):
                    self.wfile.write(out.encode("utf-8") + b"\n")
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class RunningService:
    """A served Service: owns the listening socket and its accept thread."""

    def __init__(self, service: Service, server: _TcpServer, thread: threading.Thread):
        self.service = service
        self.server = server
        self.thread = thread
        self.address: tuple[str, int] = server.server_address[:2]

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve(
    bind: str | tuple[str, int] = ("127.0.0.1", 0),
    session_limit: int = DEFAULT_SESSION_LIMIT,
    catalog: Catalog | None = None,
    registry: Registry | None = None,
) -> RunningService:
    """Listen for NDJSON connections; returns once the socket is accepting."""
    if isinstance(bind, str):
        host, _, port_text = bind.rpartition(":")
        if not host or not port_text.isdigit():
            raise BindFailure(f"bind address {bind!r} is not host:port")
        bind = (host, int(port_text))
    service = Service(session_limit=session_limit, catalog=catalog, registry=registry)
    try:
        server = _TcpServer(bind, _Handler)
    except OSError as exc:
        raise BindFailure(f"cannot bind {bind}: {exc}") from exc
    server.playroom_service = service  # type: ignore[attr-defined]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return RunningService(service, server, thread)


class Client:
    """Minimal blocking NDJSON client; collects push lines on the side."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.file = self.sock.makefile("rwb")
        self.next_id = 0
        self.pushes: list[dict] = []

    def request(self, verb: str, payload: dict | None = None) -> dict:
        self.next_id += 1
        doc = {"request_id": self.next_id, "verb": verb, "payload": payload or {}}
        self.file.write(json.dumps(doc, separators=(",", ":")).encode() + b"\n")
        self.file.flush()
        while True:
            raw = self.file.readline()
            if not raw:
                raise ProtocolError("connection closed mid-request")
            msg = json.loads(raw)
            if "push" in msg:
                self.pushes.append(msg)
                continue
            return msg

    def drain_pushes(self) -> list[dict]:
        """Pushes precede their triggering response, so request() has them already."""
        got, self.pushes = self.pushes, []
        return got

    def close(self) -> None:
        try:
            self.file.close()
        finally:
            self.sock.close()
