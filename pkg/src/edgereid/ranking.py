"""Gallery ranking and Market-1501 style CMC / mAP evaluation.

Protocol (single query):

* gallery entries with ``person_id == -1`` are junk and ignored;
* entries sharing both person id and camera with the query are ignored;
* positives are the same person seen from a different camera;
* queries without any positive are skipped and counted, not scored.

AP is computed on the ranking with ignored entries deleted, as the mean over
positives of ``hits_so_far / position``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .dataset_io import IdentityAnnotation
from .errors import DataError
from .features import FeatureVector
from .similarity import SimilarityConfig, score_many

REPORT_KEYS = ("rank_1", "rank_5", "rank_10", "mAP", "query_count", "skipped_queries")


@dataclass(frozen=True)
class GalleryEntry:
    entry_id: int
    annotation: IdentityAnnotation
    features: FeatureVector


@dataclass(frozen=True)
class RankedList:
    query_id: int | str
    entries: tuple[tuple[int, float], ...]

    @property
    def entry_ids(self) -> list[int]:
        return [e for e, _ in self.entries]

    def top(self, k: int) -> list[tuple[int, float]]:
        return list(self.entries[:k])


@dataclass(frozen=True)
class EvalReport:
    rank_1: float
    rank_5: float
    rank_10: float
    mAP: float
    query_count: int
    skipped_queries: int

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in REPORT_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        rows = [
            ("rank-1", f"{100 * self.rank_1:6.2f}%"),
            ("rank-5", f"{100 * self.rank_5:6.2f}%"),
            ("rank-10", f"{100 * self.rank_10:6.2f}%"),
            ("mAP", f"{100 * self.mAP:6.2f}%"),
            ("queries", f"{self.query_count:7d}"),
            ("skipped", f"{self.skipped_queries:7d}"),
        ]
        return "\n".join(f"{name:<10}{value:>10}" for name, value in rows)


def _check_unique(gallery: Sequence[GalleryEntry]) -> None:
    ids = [g.entry_id for g in gallery]
    if len(set(ids)) != len(ids):
        raise DataError("gallery entry ids must be unique")


def rank_gallery(
    query: FeatureVector,
    gallery: Sequence[GalleryEntry],
    config: SimilarityConfig | None = None,
    query_id: int | str = 0,
) -> RankedList:
    """All gallery entries by descending score; ties go to the smaller entry_id."""
    _check_unique(gallery)
    scores = score_many(query, [g.features for g in gallery], config)
    return ranked_from_scores([g.entry_id for g in gallery], scores, query_id)


def ranked_from_scores(
    entry_ids: Sequence[int], scores: Sequence[float], query_id: int | str = 0
) -> RankedList:
    order = sorted(range(len(entry_ids)), key=lambda i: (-scores[i], entry_ids[i]))
    return RankedList(query_id, tuple((entry_ids[i], float(scores[i])) for i in order))


def market_valid_set(
    query: IdentityAnnotation, gallery: Sequence[IdentityAnnotation]
) -> tuple[set[int], set[int]]:
    """(positives, ignored) as index sets into ``gallery``."""
    positives, ignored = set(), set()
    for i, g in enumerate(gallery):
        if g.person_id == -1:
            ignored.add(i)
        elif g.person_id == query.person_id:
            if g.camera_id == query.camera_id:
                ignored.add(i)
            else:
                positives.add(i)
    return positives, ignored


def _filtered_hits(ranked: RankedList, positives: set, ignored: set) -> list[int]:
    """1-based positions of positives in the ranking with ignored entries deleted."""
    hits, pos = [], 0
    for entry_id, _ in ranked.entries:
        if entry_id in ignored:
            continue
        pos += 1
        if entry_id in positives:
            hits.append(pos)
    return hits


def cmc_at_k(ranked: RankedList, positives: set, ignored: set, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = _filtered_hits(ranked, positives, ignored)
    return int(bool(hits) and hits[0] <= k)


def average_precision(ranked: RankedList, positives: set, ignored: set) -> float:
    if not positives:
        raise DataError("average precision is undefined without positives")
    hits = _filtered_hits(ranked, positives, ignored)
    return sum((i + 1) / p for i, p in enumerate(hits)) / len(positives)


def _evaluate_one(query, gallery, annotations, config, qi):
    annotation, features = query
    pos_idx, ign_idx = market_valid_set(annotation, annotations)
    if not pos_idx:
        return None
    positives = {gallery[i].entry_id for i in pos_idx}
    ignored = {gallery[i].entry_id for i in ign_idx}
    ranked = rank_gallery(features, gallery, config, query_id=qi)
    hits = _filtered_hits(ranked, positives, ignored)
    first = hits[0] if hits else None
    cmc = tuple(int(first is not None and first <= k) for k in (1, 5, 10))
    ap = sum((i + 1) / p for i, p in enumerate(hits)) / len(positives)
    return cmc, ap


def evaluate(
    queries: Sequence[tuple[IdentityAnnotation, FeatureVector]],
    gallery: Sequence[GalleryEntry],
    config: SimilarityConfig | None = None,
    workers: int = 1,
) -> EvalReport:
    """Mean CMC@1/5/10 and mAP over queries that have at least one positive.

    Per-query results are reduced in query order, so ``workers`` never
    changes the result.
    """
    if not queries:
        raise DataError("evaluation needs at least one query")
    config = config or SimilarityConfig()
    _check_unique(gallery)
    annotations = [g.annotation for g in gallery]

    def run(qi):
        return _evaluate_one(queries[qi], gallery, annotations, config, qi)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(queries))))
    else:
        results = [run(qi) for qi in range(len(queries))]

    scored = [r for r in results if r is not None]
    skipped = len(results) - len(scored)
    if not scored:
        return EvalReport(0.0, 0.0, 0.0, 0.0, 0, skipped)
    n = len(scored)
    sums = [0, 0, 0]
    ap_sum = 0.0
    for cmc, ap in scored:
        for j in range(3):
            sums[j] += cmc[j]
        ap_sum += ap
    return EvalReport(sums[0] / n, sums[1] / n, sums[2] / n, ap_sum / n, n, skipped)


def gallery_from(
    items: Iterable[tuple[IdentityAnnotation, FeatureVector]], start: int = 0
) -> list[GalleryEntry]:
    return [GalleryEntry(start + i, a, f) for i, (a, f) in enumerate(items)]
