"""Streaming session service: wire protocol, session connection logic, and
TCP/WebSocket/static listeners.

Wire format (canonical byte stream, used over TCP):

    control  'J' (0x4A) | u32be payload length | UTF-8 JSON
    audio    'A' (0x41) | u32be payload length | u32be seq | PCM16LE samples

Over WebSocket each protocol message is one binary frame holding the same
bytes minus the length prefix (the WS frame already carries the length).
Clips are played client-side: the server sends clip ids, never audio.
"""

from __future__ import annotations

import asyncio
import json
import logging
import struct
from collections import deque
from pathlib import Path

import numpy as np

from .audio_io import CANONICAL_RATE, INT16_FULL_SCALE, Frame
from .engine import Session, SessionRuntime, TaskType, UnknownTask

logger = logging.getLogger(__name__)

TAG_JSON = 0x4A
TAG_AUDIO = 0x41

DEFAULT_ADDR_ENV = "BC_ENGINE_ADDR"
DEFAULT_TCP_ADDR = "127.0.0.1:8940"


class ProtocolError(Exception):
    pass


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------


def encode_control(obj: dict) -> bytes:
    payload = json.dumps(obj, sort_keys=True).encode("utf-8")
    return bytes([TAG_JSON]) + struct.pack(">I", len(payload)) + payload


def encode_audio(seq: int, pcm: bytes) -> bytes:
    return bytes([TAG_AUDIO]) + struct.pack(">I", 4 + len(pcm)) + struct.pack(">I", seq) + pcm


def ws_payload(frame: bytes) -> bytes:
    """Strip the length prefix: tag + body, as carried in one WS frame."""
    tag = frame[0]
    return bytes([tag]) + frame[5:]


def decode_ws_payload(data: bytes):
    if not data:
        raise ProtocolError("empty message")
    tag = data[0]
    if tag == TAG_JSON:
        return "json", json.loads(data[1:].decode("utf-8"))
    if tag == TAG_AUDIO:
        if len(data) < 5:
            raise ProtocolError("short audio message")
        (seq,) = struct.unpack(">I", data[1:5])
        return "audio", (seq, data[5:])
    raise ProtocolError(f"unknown tag 0x{tag:02x}")


class FrameDecoder:
    """Incremental decoder for the length-prefixed byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 5:
                break
            tag = self._buf[0]
            (length,) = struct.unpack(">I", self._buf[1:5])
            if len(self._buf) < 5 + length:
                break
            payload = bytes(self._buf[5 : 5 + length])
            del self._buf[: 5 + length]
            if tag == TAG_JSON:
                out.append(("json", json.loads(payload.decode("utf-8"))))
            elif tag == TAG_AUDIO:
                if length < 4:
                    raise ProtocolError("short audio frame")
                (seq,) = struct.unpack(">I", payload[:4])
                out.append(("audio", (seq, payload[4:])))
            else:
                raise ProtocolError(f"unknown tag 0x{tag:02x}")
        return out


# ---------------------------------------------------------------------------
# Online framing of chunked PCM
# ---------------------------------------------------------------------------


class OnlineFramer:
    """Re-frames arbitrary chunk boundaries into hop-spaced analysis frames.

    Produces exactly the frames frame_iter would produce on the
    concatenated samples; the trailing partial frames appear on flush,
    zero-padded.
    """

    def __init__(self, frame_ms: int = 25, hop_ms: int = 10) -> None:
        self.frame_len = CANONICAL_RATE * frame_ms // 1000
        self.hop = CANONICAL_RATE * hop_ms // 1000
        self.frame_ms = frame_ms
        self.hop_ms = hop_ms
        self._samples = np.zeros(0)
        self._consumed = 0  # samples dropped from the front
        self._next_frame = 0

    def push(self, samples: np.ndarray) -> list[Frame]:
        self._samples = np.concatenate([self._samples, samples])
        frames = []
        while self._next_frame * self.hop + self.frame_len <= self._consumed + len(self._samples):
            frames.append(self._take(self._next_frame))
            self._next_frame += 1
        self._trim()
        return frames

    def flush(self) -> list[Frame]:
        total = self._consumed + len(self._samples)
        frames = []
        while self._next_frame * self.hop < total:
            frames.append(self._take(self._next_frame))
            self._next_frame += 1
        return frames

    @property
    def elapsed_ms(self) -> int:
        return self._next_frame * self.hop_ms

    def _take(self, k: int) -> Frame:
        start = k * self.hop - self._consumed
        chunk = self._samples[start : start + self.frame_len]
        if len(chunk) < self.frame_len:
            chunk = np.concatenate([chunk, np.zeros(self.frame_len - len(chunk))])
        return Frame(chunk, start_ms=k * self.hop_ms, frame_ms=self.frame_ms, hop_ms=self.hop_ms)

    def _trim(self) -> None:
        keep_from = self._next_frame * self.hop - self._consumed
        if keep_from > 0:
            self._samples = self._samples[keep_from:]
            self._consumed += keep_from


# ---------------------------------------------------------------------------
# Session connection (transport-agnostic)
# ---------------------------------------------------------------------------


class SessionConnection:
    """Per-connection protocol state machine.

    One session per connection; inbound messages are processed strictly in
    order. Backchannel messages are held while the client reports an open
    clip playback (it acknowledges with playback_done).
    """

    def __init__(self, runtime_loader=None) -> None:
        self.runtime_loader = runtime_loader or _default_runtime_loader
        self.runtime: SessionRuntime | None = None
        self.session: Session | None = None
        self.session_id = ""
        self.metadata: dict = {}
        self.task_id = ""
        self.last_seq: int | None = None
        self.framer: OnlineFramer | None = None
        self.playback_open = False
        self.held: deque[dict] = deque()
        self.terminated = False
        self._last_task_second = 0

    # -- inbound dispatch ---------------------------------------------------

    def handle(self, kind: str, payload) -> list[dict]:
        if self.terminated:
            return []
        try:
            if kind == "json":
                return self._handle_control(payload)
            return self._handle_audio(*payload)
        except ProtocolError as exc:
            self.terminated = True
            return [{"type": "error", "code": "protocol", "detail": str(exc)}]

    def _handle_control(self, msg: dict) -> list[dict]:
        mtype = msg.get("type")
        if self.runtime is None and mtype != "hello":
            raise ProtocolError("hello must be the first message")
        if mtype == "hello":
            if self.runtime is not None:
                raise ProtocolError("duplicate hello")
            self.session_id = msg.get("session_id", "")
            # Reserved client metadata (e.g. demographics); stored but not
            # consumed by any model.
            self.metadata = msg.get("metadata", {})
            self.runtime = self.runtime_loader(msg.get("config_ref", "default"))
            return [{"type": "ready", "session_id": self.session_id}]
        if mtype == "start_task":
            task_id = msg.get("task_id", "")
            try:
                self.session = self.runtime.build_session(task_id)
            except UnknownTask:
                return [{"type": "error", "code": "unknown-task", "detail": task_id}]
            self.task_id = task_id
            self.framer = OnlineFramer()
            self._last_task_second = 0
            task = self.runtime.tasks[task_id]
            return [{"type": "task_state", "remaining_ms": task.duration_ms or 0}]
        if mtype == "end_task":
            return self._end_task()
        if mtype == "playback_done":
            self.playback_open = False
            return self._release_held()
        if mtype == "bye":
            self.terminated = True
            return []
        raise ProtocolError(f"unknown message type {mtype!r}")

    def _handle_audio(self, seq: int, pcm: bytes) -> list[dict]:
        if self.runtime is None:
            raise ProtocolError("hello must be the first message")
        if self.session is None:
            return [{"type": "error", "code": "no-active-task", "detail": "audio before start_task"}]
        if self.last_seq is not None and seq <= self.last_seq:
            raise ProtocolError(f"seq {seq} not increasing after {self.last_seq}")
        self.last_seq = seq
        if len(pcm) % 2 != 0:
            raise ProtocolError("audio chunk must hold whole 16-bit samples")
        samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / INT16_FULL_SCALE
        out: list[dict] = []
        for frame in self.framer.push(samples):
            out.extend(self._rows_to_messages(self.session.feed_frame(frame)))
            out.extend(self._task_state_updates(frame.start_ms + frame.hop_ms))
        return out

    def _end_task(self) -> list[dict]:
        if self.session is None:
            return [{"type": "error", "code": "no-active-task", "detail": "end_task without task"}]
        out: list[dict] = []
        for frame in self.framer.flush():
            out.extend(self._rows_to_messages(self.session.feed_frame(frame)))
        out.extend(self._rows_to_messages(self.session.finish()))
        task = self.runtime.tasks[self.task_id]
        remaining = (
            max(0, task.duration_ms - self.framer.elapsed_ms) if task.duration_ms else 0
        )
        self.session = None
        self.framer = None
        out.append({"type": "task_state", "remaining_ms": remaining})
        return out

    # -- outbound helpers ----------------------------------------------------

    def _rows_to_messages(self, rows: list[dict]) -> list[dict]:
        out = []
        for row in rows:
            if row["type"] == "event":
                out.append({"type": "event", **{k: v for k, v in row.items() if k != "type"}})
            elif row["type"] == "decision":
                msg = {
                    "type": "backchannel",
                    "category": row["category"],
                    "clip_id": row["clip_id"],
                    "t_ms": row["t_ms"],
                }
                if self.playback_open:
                    self.held.append(msg)
                else:
                    self.playback_open = True
                    out.append(msg)
            # trace rows stay server-side
        return out

    def _release_held(self) -> list[dict]:
        if self.held and not self.playback_open:
            self.playback_open = True
            return [self.held.popleft()]
        return []

    def _task_state_updates(self, t_ms: int) -> list[dict]:
        if self.runtime is None or self.task_id not in self.runtime.tasks:
            return []
        task = self.runtime.tasks[self.task_id]
        if task.task_type is not TaskType.TIMED_SERIES or not task.duration_ms:
            return []
        out = []
        second = t_ms // 1000
        while self._last_task_second < second:
            self._last_task_second += 1
            remaining = max(0, task.duration_ms - self._last_task_second * 1000)
            out.append({"type": "task_state", "remaining_ms": remaining})
        return out


def _default_runtime_loader(config_ref: str) -> SessionRuntime:
    from .engine import default_session_runtime, load_session_config

    if config_ref in ("", "default"):
        return default_session_runtime()
    return load_session_config(config_ref)


# ---------------------------------------------------------------------------
# Listeners
# ---------------------------------------------------------------------------


async def _tcp_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                          runtime_loader=None) -> None:
    conn = SessionConnection(runtime_loader)
    decoder = FrameDecoder()
    try:
        while not conn.terminated:
            data = await reader.read(65536)
            if not data:
                break
            for kind, payload in decoder.feed(data):
                for msg in conn.handle(kind, payload):
                    writer.write(encode_control(msg))
            await writer.drain()
    except (ConnectionError, ProtocolError) as exc:
        logger.info("tcp connection closed: %s", exc)
    finally:
        writer.close()


async def serve_tcp(host: str, port: int, runtime_loader=None) -> asyncio.AbstractServer:
    async def cb(r, w):
        await _tcp_connection(r, w, runtime_loader)

    server = await asyncio.start_server(cb, host, port)
    logger.info("tcp listener on %s:%d", host, port)
    return server


def build_web_app(runtime_loader=None, static_dir: str | Path | None = None):
    """aiohttp app: /ws speaks the protocol, plus static clip/frontend routes."""
    from aiohttp import WSMsgType, web

    async def ws_handler(request):
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        conn = SessionConnection(runtime_loader)
        async for msg in ws:
            if msg.type == WSMsgType.BINARY:
                try:
                    kind, payload = decode_ws_payload(msg.data)
                except ProtocolError as exc:
                    await ws.send_bytes(ws_payload(encode_control(
                        {"type": "error", "code": "protocol", "detail": str(exc)})))
                    break
                for out in conn.handle(kind, payload):
                    await ws.send_bytes(ws_payload(encode_control(out)))
                if conn.terminated:
                    break
            elif msg.type == WSMsgType.ERROR:
                break
        await ws.close()
        return ws

    app = web.Application()
    app.router.add_get("/ws", ws_handler)
    if static_dir is not None:
        static_dir = Path(static_dir)
        app.router.add_static("/static", static_dir)
    return app


async def run_servers(
    tcp_addr: str | None,
    http_addr: str | None,
    runtime_loader=None,
    static_dir: str | Path | None = None,
) -> None:
    from aiohttp import web

    waiters = []
    if tcp_addr:
        host, port = tcp_addr.rsplit(":", 1)
        server = await serve_tcp(host, int(port), runtime_loader)
        waiters.append(server.serve_forever())
    if http_addr:
        host, port = http_addr.rsplit(":", 1)
        app = build_web_app(runtime_loader, static_dir)
        runner = web.AppRunner(app)
        await runner.setup()
        site = web.TCPSite(runner, host, int(port))
        await site.start()
        logger.info("http/ws listener on %s:%d", host, int(port))
        waiters.append(asyncio.Event().wait())
    if not waiters:
        raise ValueError("no listener configured")
    await asyncio.gather(*waiters)
