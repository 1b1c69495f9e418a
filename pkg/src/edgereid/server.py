"""TCP ranking server and the matching client used by edge agents.

Requests are ``u32 length | type byte | FeatureMessage``; SUBMIT (0x01)
appends to the gallery log, QUERY (0x02) returns the top-k matches.  Every
response is ``u32 length | JSON``::

    {"status": "ok", "entry_id": 17}
    {"status": "ok", "results": [{"entry_id": 3, "score": 0.97}, ...]}
    {"status": "error", "error": "BadMagic", "detail": "..."}

A malformed frame gets an error response and the connection stays open.
Only an oversized length prefix closes it, since the stream cannot be
resynchronised after that.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading

from .errors import ReidError
from .protocol import (
    MAX_FRAME,
    MSG_QUERY,
    MSG_RESERVED,
    MSG_SUBMIT,
    U32,
    FeatureMessage,
    decode_feature_message,
    encode_message,
    frame,
    frame_json,
    recv_exact,
    recv_length_prefixed,
)
from .similarity import SimilarityConfig
from .store import GalleryStore

log = logging.getLogger(__name__)

DEFAULT_PORT = 7878


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return default_host, int(text)
    return host or default_host, int(port)


def _error(kind: str, detail: str) -> dict:
    return {"status": "error", "error": kind, "detail": detail}


def handle_request(
    store: GalleryStore, body: bytes, config: SimilarityConfig, top_k: int
) -> dict:
    """Turn one request body (type byte + payload) into a JSON-able response."""
    if not body:
        return _error("EmptyFrame", "frame carries no message type")
    msg_type, payload = body[0], body[1:]
    try:
        if msg_type == MSG_SUBMIT:
            return {"status": "ok", "entry_id": store.append(payload)}
        if msg_type == MSG_QUERY:
            msg = decode_feature_message(payload)
            ranked = store.query(msg.features, top_k, config)
            return {
                "status": "ok",
                "results": [{"entry_id": e, "score": s} for e, s in ranked.entries],
            }
        if msg_type == MSG_RESERVED:
            return _error("Unsupported", "mask transmission is not implemented")
        return _error("UnknownType", f"unknown message type 0x{msg_type:02x}")
    except ReidError as exc:
        return _error(type(exc).__name__, str(exc))
    except OSError as exc:
        log.exception("gallery store I/O failure")
        return _error("StoreIOError", str(exc))


class _Handler(socketserver.BaseRequestHandler):
    server: "RankingServer"

    def handle(self):
        sock = self.request
        while True:
            try:
                (length,) = U32.unpack(recv_exact(sock, U32.size))
            except ConnectionError:
                return
            if length > MAX_FRAME:
                self._reply(_error("FrameTooLarge", f"{length} > {MAX_FRAME} bytes"))
                return
            try:
                body = recv_exact(sock, length)
            except ConnectionError:
                return
            resp = handle_request(
                self.server.store, body, self.server.similarity, self.server.top_k
            )
            try:
                self._reply(resp)
            except OSError:
                return

    def _reply(self, resp: dict) -> None:
        self.request.sendall(frame_json(json.dumps(resp).encode("utf-8")))


class RankingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        store: GalleryStore,
        similarity: SimilarityConfig | None = None,
        top_k: int = 10,
    ):
        self.store = store
        self.similarity = similarity or SimilarityConfig()
        self.top_k = top_k
        super().__init__(address, _Handler)

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve_ranking(
    store: GalleryStore,
    bind: tuple[str, int],
    config: SimilarityConfig | None = None,
    top_k: int = 10,
) -> RankingServer:
    """Create a bound server; call ``serve_forever`` or ``start_background``."""
    return RankingServer(bind, store, config, top_k)


class RankingClient:
    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.sock = socket.create_connection(address, timeout=timeout)

    def request(self, msg_type: int, payload: bytes) -> dict:
        self.sock.sendall(frame(msg_type, payload))
        return json.loads(recv_length_prefixed(self.sock).decode("utf-8"))

    def request_raw(self, raw: bytes) -> dict:
        self.sock.sendall(raw)
        return json.loads(recv_length_prefixed(self.sock).decode("utf-8"))

    def submit(self, msg: FeatureMessage) -> dict:
        return self.request(MSG_SUBMIT, encode_message(msg))

    def query(self, msg: FeatureMessage) -> dict:
        return self.request(MSG_QUERY, encode_message(msg))

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
