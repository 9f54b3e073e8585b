"""Streaming conversion service: WebSocket duplex audio plus a speaker
catalog over HTTP.

One runtime session is active at a time; extra clients wait in a FIFO queue
with periodic position updates and are promoted when the active session ends
or its 5-minute budget expires. Control messages are JSON text, audio frames
are exactly 480 bytes of s16le mono at 16 kHz.
"""

from __future__ import annotations

import asyncio
import io
import json
import time
import uuid
import wave
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from starlette.websockets import WebSocket, WebSocketDisconnect

from . import audio_io, speaker as speaker_mod
from .errors import FormatError, ParameterError
from .runtime import Models, PipelineConfig, Session

FRAME_BYTES = 480  # 240 samples of s16le
SESSION_TTL_S = 300.0
NOTIFY_INTERVAL_S = 5.0

QUEUED = "queued"
ACTIVE = "active"
EXPIRED = "expired"
CLOSED = "closed"


class ServerFullError(Exception):
    def __init__(self, retry_after_s: float):
        super().__init__(f"server full, retry after {retry_after_s:.0f} s")
        self.retry_after_s = retry_after_s


@dataclass
class SessionTicket:
    id: str
    state: str
    created_at: float
    started_at: float | None = None
    last_notified: float = 0.0

    def age(self, now: float) -> float:
        return now - self.started_at if self.started_at is not None else 0.0


Event = tuple[str, dict]


class SessionManager:
    """Ticket state machine: at most one active session, FIFO promotion,
    fixed time budget. Pure and clock-injected so it can be property-tested
    without a server."""

    def __init__(
        self,
        clock=time.monotonic,
        ttl_s: float = SESSION_TTL_S,
        max_queue: int = 16,
        notify_interval_s: float = NOTIFY_INTERVAL_S,
    ):
        self.clock = clock
        self.ttl_s = ttl_s
        self.max_queue = max_queue
        self.notify_interval_s = notify_interval_s
        self.tickets: dict[str, SessionTicket] = {}
        self.queue: list[str] = []
        self.active_id: str | None = None

    def connect(self) -> tuple[SessionTicket, list[Event]]:
        now = self.clock()
        if self.active_id is not None and len(self.queue) >= self.max_queue:
            raise ServerFullError(self.ttl_s)
        ticket = SessionTicket(uuid.uuid4().hex[:12], QUEUED, created_at=now)
        self.tickets[ticket.id] = ticket
        if self.active_id is None:
            events = self._promote(ticket.id)
        else:
            self.queue.append(ticket.id)
            ticket.last_notified = now
            events = [(ticket.id, {"type": "queue", "position": len(self.queue)})]
        return ticket, events

    def disconnect(self, ticket_id: str) -> list[Event]:
        ticket = self.tickets.get(ticket_id)
        if ticket is None or ticket.state == CLOSED:
            return []
        was_active = self.active_id == ticket_id
        ticket.state = CLOSED
        if ticket_id in self.queue:
            self.queue.remove(ticket_id)
        events: list[Event] = []
        if was_active:
            self.active_id = None
            events += self._promote_next()
        return events

    def expire_sessions(self) -> list[Event]:
        """Close the active session once it exceeds its time budget and
        promote the queue head."""
        events: list[Event] = []
        if self.active_id is not None:
            ticket = self.tickets[self.active_id]
            if ticket.age(self.clock()) > self.ttl_s:
                ticket.state = EXPIRED
                self.active_id = None
                events.append((ticket.id, {"type": "expired"}))
                events += self._promote_next()
        return events

    def tick(self) -> list[Event]:
        """Expiry plus periodic queue-position reminders."""
        events = self.expire_sessions()
        now = self.clock()
        for pos, tid in enumerate(self.queue, start=1):
            ticket = self.tickets[tid]
            if now - ticket.last_notified >= self.notify_interval_s:
                ticket.last_notified = now
                events.append((tid, {"type": "queue", "position": pos}))
        return events

    def is_active(self, ticket_id: str) -> bool:
        return self.active_id == ticket_id

    def queue_position(self, ticket_id: str) -> int | None:
        return self.queue.index(ticket_id) + 1 if ticket_id in self.queue else None

    def state_event(self, ticket_id: str) -> dict:
        ticket = self.tickets[ticket_id]
        if ticket.state == ACTIVE:
            return {"type": "active"}
        if ticket.state == QUEUED:
            return {"type": "queue", "position": self.queue_position(ticket_id)}
        return {"type": ticket.state}

    def _promote(self, ticket_id: str) -> list[Event]:
        ticket = self.tickets[ticket_id]
        ticket.state = ACTIVE
        ticket.started_at = self.clock()
        self.active_id = ticket_id
        return [(ticket_id, {"type": "active"})]

    def _promote_next(self) -> list[Event]:
        if not self.queue:
            return []
        return self._promote(self.queue.pop(0))


@dataclass
class CatalogEntry:
    id: str
    name: str
    embedding_path: str
    m_tgt_hz: float
    embedding: speaker_mod.SpeakerEmbedding | None = None

    def load(self) -> speaker_mod.SpeakerEmbedding:
        if self.embedding is None:
            self.embedding = speaker_mod.load_embedding(self.embedding_path, self.id)
        return self.embedding


@dataclass
class SpeakerCatalog:
    entries: list[CatalogEntry] = field(default_factory=list)
    path: str | None = None

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ParameterError("speaker ids must be unique")

    def get(self, speaker_id: str) -> CatalogEntry | None:
        for e in self.entries:
            if e.id == speaker_id:
                return e
        return None

    def add(self, entry: CatalogEntry) -> None:
        if self.get(entry.id) is not None:
            raise ParameterError(f"speaker id {entry.id!r} already enrolled")
        self.entries.append(entry)

    def to_json(self) -> str:
        return json.dumps(
            {
                "speakers": [
                    {
                        "id": e.id,
                        "name": e.name,
                        "embedding": e.embedding_path,
                        "m_tgt_hz": e.m_tgt_hz,
                    }
                    for e in self.entries
                ]
            },
            indent=2,
        )

    def save(self, path=None) -> None:
        target = path or self.path
        if target is None:
            raise ParameterError("catalog has no path")
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def load_catalog(path) -> SpeakerCatalog:
    import os

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for s in doc["speakers"]:
        ref = s["embedding"]
        if ref and not os.path.isabs(ref):
            ref = os.path.join(base, ref)
        entries.append(CatalogEntry(s["id"], s.get("name", s["id"]), ref, s["m_tgt_hz"]))
    return SpeakerCatalog(entries, path=str(path))


def create_app(
    config: PipelineConfig,
    models: Models,
    catalog: SpeakerCatalog,
    clock=time.monotonic,
    admin_enabled: bool = False,
    run_background_tasks: bool = True,
    web_root: str | None = None,
) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = None
        if run_background_tasks:
            task = asyncio.create_task(_pump(app))
        yield
        if task is not None:
            task.cancel()

    app = FastAPI(title="artivoc streaming service", lifespan=lifespan)
    app.state.manager = SessionManager(clock=clock)
    app.state.models = models
    app.state.config = config
    app.state.catalog = catalog
    app.state.session = None
    app.state.outboxes = {}
    app.state.admin_enabled = admin_enabled

    def dispatch(events: list[Event]) -> None:
        for tid, payload in events:
            outbox = app.state.outboxes.get(tid)
            if outbox is not None:
                outbox.put_nowait(payload)

    app.state.dispatch = dispatch

    @app.get("/speakers")
    def speakers():
        return {
            "speakers": [{"id": e.id, "name": e.name} for e in catalog.entries]
        }

    @app.post("/enroll")
    async def enroll(request: Request):
        if not app.state.admin_enabled:
            return Response(
                content=json.dumps({"error": "enrollment disabled"}),
                status_code=403, media_type="application/json",
            )
        body = await request.body()
        try:
            with wave.open(io.BytesIO(body), "rb") as wf:
                if wf.getsampwidth() != 2:
                    raise FormatError("only 16-bit PCM WAV")
                rate = wf.getframerate()
                raw = wf.readframes(wf.getnframes())
            signal = audio_io.s16_to_f32(np.frombuffer(raw, dtype="<i2"))
            if rate != config.frame_spec.sample_rate:
                raise FormatError(f"expected {config.frame_spec.sample_rate} Hz WAV")
            result = speaker_mod.enroll(signal, models.graphs, models.weights,
                                        config.frame_spec)
        except Exception as exc:  # noqa: BLE001 - turn into a clean 400
            return Response(
                content=json.dumps({"error": str(exc)}),
                status_code=400, media_type="application/json",
            )
        speaker_id = f"s{len(catalog.entries):03d}"
        entry = CatalogEntry(speaker_id, speaker_id, "", result.median_f0_hz,
                             embedding=result.embedding)
        catalog.add(entry)
        return {"id": speaker_id, "m_tgt_hz": result.median_f0_hz}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        manager: SessionManager = app.state.manager
        try:
            ticket, events = manager.connect()
        except ServerFullError as exc:
            await ws.send_json(
                {"type": "error", "reason": "server_full",
                 "retry_after_s": exc.retry_after_s}
            )
            await ws.close(code=1013)
            return

        outbox: asyncio.Queue = asyncio.Queue()
        app.state.outboxes[ticket.id] = outbox
        dispatch(events)

        async def sender():
            while True:
                payload = await outbox.get()
                await ws.send_json(payload)

        send_task = asyncio.create_task(sender())
        frames_in = 0
        frames_out = 0
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                dispatch(manager.tick())
                if manager.tickets[ticket.id].state == EXPIRED:
                    # Flush the expiry notice before tearing the stream down;
                    # the sender task may not have been scheduled yet.
                    while not outbox.empty():
                        await ws.send_json(outbox.get_nowait())
                    await ws.close()
                    break
                data = message.get("bytes")
                if data is not None:
                    if len(data) != FRAME_BYTES:
                        await ws.send_json(
                            {"type": "error", "reason": "bad_frame_size",
                             "expected": FRAME_BYTES, "got": len(data)}
                        )
                        await ws.close(code=1002)
                        break
                    if not manager.is_active(ticket.id):
                        await ws.send_json({"type": "error", "reason": "not_active"})
                        continue
                    session: Session | None = app.state.session
                    if session is None or not session.has_speaker:
                        await ws.send_json({"type": "error", "reason": "no_speaker"})
                        continue
                    frames_in += 1
                    pcm = np.frombuffer(data, dtype="<i2")
                    out = session.process_chunk(audio_io.s16_to_f32(pcm))
                    frames_out += 1
                    await ws.send_bytes(audio_io.f32_to_s16(out).tobytes())
                    continue
                text = message.get("text")
                if text is None:
                    continue
                try:
                    msg = json.loads(text)
                    msg_type = msg["type"]
                except (ValueError, KeyError, TypeError):
                    await ws.send_json({"type": "error", "reason": "bad_message"})
                    continue
                if msg_type == "hello":
                    await ws.send_json(manager.state_event(ticket.id))
                elif msg_type == "select_speaker":
                    await _select_speaker(app, ws, manager, ticket.id, msg.get("id"))
                elif msg_type == "stats":
                    stats = app.state.session.stats() if app.state.session else {}
                    await ws.send_json(
                        {"type": "stats", "ticket": ticket.id,
                         "state": manager.tickets[ticket.id].state,
                         "queue_position": manager.queue_position(ticket.id),
                         "frames_in": frames_in, "frames_out": frames_out,
                         "session": stats}
                    )
                elif msg_type == "bye":
                    await ws.close()
                    break
                else:
                    await ws.send_json({"type": "error", "reason": "unknown_type"})
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            app.state.outboxes.pop(ticket.id, None)
            was_active = manager.is_active(ticket.id)
            dispatch(manager.disconnect(ticket.id))
            if was_active:
                app.state.session = None

    if web_root is not None:
        from starlette.staticfiles import StaticFiles

        # Mounted last so the API and websocket routes win the match.
        app.mount("/", StaticFiles(directory=web_root, html=True), name="web")

    return app


async def _pump(app: FastAPI):
    """Production heartbeat: expiry and queue-position notifications."""
    while True:
        await asyncio.sleep(1.0)
        app.state.dispatch(app.state.manager.tick())


async def _select_speaker(app, ws, manager, ticket_id, speaker_id):
    if not manager.is_active(ticket_id):
        await ws.send_json({"type": "error", "reason": "not_active"})
        return
    entry = app.state.catalog.get(speaker_id)
    if entry is None:
        await ws.send_json({"type": "error", "reason": "unknown_speaker", "id": speaker_id})
        return
    try:
        embedding = entry.load()
    except Exception:  # noqa: BLE001 - a broken entry must not kill the stream
        await ws.send_json(
            {"type": "error", "reason": "speaker_unavailable", "id": speaker_id}
        )
        return
    if app.state.session is None:
        app.state.session = Session(
            app.state.config, app.state.models, embedding, entry.m_tgt_hz
        )
    else:
        app.state.session.swap_speaker(embedding, entry.m_tgt_hz)
    await ws.send_json({"type": "speaker", "id": speaker_id})
