"""On-device watchlist detector.

Each incoming frame is turned into a feature vector, scored against every
watchlist entry, and an alert is emitted for each entry at or above the
threshold, best match first.  Nothing about a frame is kept once its alerts
have been produced.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from .dataset_io import IdentityAnnotation, LabelMap, PersonImage
from .errors import ConfigError, DataError, ReidError
from .features import ExtractionConfig, FeatureVector, features_from_pair
from .protocol import CaptureMeta, encode_feature_message
from .similarity import SimilarityConfig, score_many
from .store import read_archive

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.85
UNKNOWN_ANNOTATION = IdentityAnnotation(-1, 1, 1, 0)


@dataclass(frozen=True)
class WatchlistEntry:
    watch_id: str
    label: str
    features: FeatureVector


@dataclass(frozen=True)
class MatchAlert:
    watch_id: str
    label: str
    score: float
    device_id: int
    capture_timestamp: int
    message_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True)
class Frame:
    image: PersonImage
    mask: LabelMap
    device_id: int = 0
    capture_timestamp: int | None = None
    annotation: IdentityAnnotation = UNKNOWN_ANNOTATION


def load_watchlist(path: str | Path) -> list[WatchlistEntry]:
    """Read a watchlist from JSON or from a feature archive.

    JSON form: ``[{"watch_id": ..., "label": ..., "features": {...}}]`` with
    features in canonical FeatureVector JSON.  Archive records get watch ids
    equal to their record index and a label naming the annotated person.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            entries = [
                WatchlistEntry(
                    str(d["watch_id"]), str(d["label"]), FeatureVector.from_json_dict(d["features"])
                )
                for d in doc
            ]
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid watchlist {path}: {exc}") from exc
    else:
        entries = [
            WatchlistEntry(str(i), f"person {m.annotation.person_id}", m.features)
            for i, m in enumerate(read_archive(path))
        ]
    ids = [e.watch_id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError("watch ids must be unique")
    return entries


def match_frame(
    features: FeatureVector,
    watchlist: list[WatchlistEntry],
    threshold: float,
    config: SimilarityConfig,
) -> list[tuple[WatchlistEntry, float]]:
    scores = score_many(features, [w.features for w in watchlist], config)
    hits = [(w, float(s)) for w, s in zip(watchlist, scores) if s >= threshold]
    hits.sort(key=lambda h: (-h[1], h[0].watch_id))
    return hits


def watch(
    watchlist: list[WatchlistEntry],
    frames: Iterable[Frame],
    threshold: float = DEFAULT_THRESHOLD,
    extraction: ExtractionConfig | None = None,
    similarity: SimilarityConfig | None = None,
) -> Iterator[MatchAlert]:
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")
    extraction = extraction or ExtractionConfig()
    similarity = similarity or SimilarityConfig()
    for n, fr in enumerate(frames):
        if not watchlist:
            continue
        try:
            fv = features_from_pair(fr.image, fr.mask, extraction)
            hits = match_frame(fv, watchlist, threshold, similarity)
        except ReidError as exc:
            log.warning("frame %d skipped: %s", n, exc)
            continue
        if not hits:
            continue
        ts = fr.capture_timestamp
        if ts is None:
            ts = int(time.time() * 1000)
        meta = CaptureMeta(fr.device_id, ts, fr.annotation)
        digest = hashlib.blake2b(encode_feature_message(fv, meta), digest_size=16).hexdigest()
        for entry, score in hits:
            yield MatchAlert(entry.watch_id, entry.label, score, fr.device_id, ts, digest)


def write_alerts(alerts: Iterable[MatchAlert], sink: IO[str]) -> int:
    n = 0
    for a in alerts:
        sink.write(a.to_json() + "\n")
        sink.flush()
        n += 1
    return n
