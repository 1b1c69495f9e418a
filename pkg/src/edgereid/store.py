"""Append-only gallery log.

The file is a plain concatenation of ``u32 length | FeatureMessage`` records
with no header. Feature archives written by ``edgereid extract`` use the same
format, so a store file can be evaluated offline and vice versa.

On open the log is scanned; an incomplete trailing record (a crash mid-write)
is cut off and everything before it is kept.
"""

from __future__ import annotations

import logging
import os
import threading
from pathlib import Path
from typing import Iterable, Iterator

from .errors import IncompatibleFeatures, ProtocolError, StoreCorrupted
from .features import FeatureVector
from .protocol import U32, FeatureMessage, decode_feature_message, encode_message
from .ranking import GalleryEntry, RankedList, rank_gallery
from .similarity import SimilarityConfig

log = logging.getLogger(__name__)


def iter_records(data: bytes) -> Iterator[tuple[int, bytes]]:
    """Yield (offset, payload) for each complete record; stops at a torn tail."""
    off = 0
    while off + U32.size <= len(data):
        (length,) = U32.unpack_from(data, off)
        end = off + U32.size + length
        if end > len(data):
            return
        yield off, data[off + U32.size : end]
        off = end


def read_archive(path: str | Path) -> list[FeatureMessage]:
    """Decode every complete record; a torn tail is ignored."""
    data = Path(path).read_bytes()
    out = []
    for off, payload in iter_records(data):
        try:
            out.append(decode_feature_message(payload))
        except ProtocolError as exc:
            raise StoreCorrupted(f"{path}: bad record at byte {off}: {exc}") from exc
    return out


def write_archive(path: str | Path, messages: Iterable[FeatureMessage]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for m in messages:
            payload = encode_message(m)
            fh.write(U32.pack(len(payload)) + payload)
            n += 1
    return n


class GalleryStore:
    """Gallery backed by an append-only log plus an in-memory index.

    Appends are serialised by a lock; readers work on a snapshot of the
    index and never block appends for longer than a list slice.
    """

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._entries: list[GalleryEntry] = []
        self._messages: list[FeatureMessage] = []
        self._recover()
        self._fh = open(self.path, "ab")

    def _recover(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return
        data = self.path.read_bytes()
        good_end = 0
        for off, payload in iter_records(data):
            try:
                msg = decode_feature_message(payload)
            except ProtocolError as exc:
                raise StoreCorrupted(f"{self.path}: bad record at byte {off}: {exc}") from exc
            self._add(msg)
            good_end = off + U32.size + len(payload)
        if good_end < len(data):
            log.warning(
                "%s: discarding %d-byte torn tail", self.path, len(data) - good_end
            )
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    def _add(self, msg: FeatureMessage) -> int:
        entry_id = len(self._entries)
        self._entries.append(GalleryEntry(entry_id, msg.annotation, msg.features))
        self._messages.append(msg)
        return entry_id

    @property
    def config_digest(self) -> bytes | None:
        entries = self._entries
        return entries[0].features.config_digest if entries else None

    def __len__(self) -> int:
        return len(self._entries)

    def snapshot(self) -> list[GalleryEntry]:
        return self._entries[: len(self._entries)]

    def messages(self) -> list[FeatureMessage]:
        return self._messages[: len(self._messages)]

    def append(self, payload: bytes) -> int:
        """Validate an encoded FeatureMessage, persist it, return its entry id."""
        msg = decode_feature_message(payload)
        with self._lock:
            digest = self.config_digest
            if digest is not None and msg.features.config_digest != digest:
                raise IncompatibleFeatures(
                    f"store holds features with digest {digest.hex()}, "
                    f"got {msg.features.config_digest.hex()}"
                )
            self._fh.write(U32.pack(len(payload)) + payload)
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
            return self._add(msg)

    def query(
        self, features: FeatureVector, k: int, config: SimilarityConfig | None = None
    ) -> RankedList:
        entries = self.snapshot()
        if not entries:
            return RankedList("query", ())
        ranked = rank_gallery(features, entries, config, query_id="query")
        return RankedList(ranked.query_id, ranked.entries[:k])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
