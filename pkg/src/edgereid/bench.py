"""Stage timings for the analytical pipeline.

The first repetition is reported on its own (cold caches, lazy imports);
``median_ms`` covers the remaining repetitions, or the single one when
``reps == 1``.
"""

from __future__ import annotations

import statistics
import time
from typing import Callable, Sequence

from .dataset_io import LabelMap, PersonImage
from .errors import DataError
from .features import ExtractionConfig, features_from_pair
from .protocol import FeatureMessage
from .ranking import GalleryEntry, rank_gallery
from .similarity import SimilarityConfig, similarity_score


def _time(fn: Callable[[], object], reps: int) -> tuple[dict, object]:
    times, result = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    steady = times[1:] or times
    return {"first_ms": times[0], "median_ms": statistics.median(steady)}, result


def run_bench(
    messages: Sequence[FeatureMessage],
    frames: Sequence[tuple[PersonImage, LabelMap]],
    extraction: ExtractionConfig,
    similarity: SimilarityConfig,
    reps: int,
) -> dict:
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    if not messages:
        raise DataError("benchmark archive is empty")
    gallery = [GalleryEntry(i, m.annotation, m.features) for i, m in enumerate(messages)]
    query = gallery[0].features

    extract_t, extracted = _time(
        lambda: [features_from_pair(img, mask, extraction) for img, mask in frames], reps
    )
    score_t, scores = _time(
        lambda: [similarity_score(query, g.features, similarity) for g in gallery], reps
    )
    rank_t, ranked = _time(lambda: rank_gallery(query, gallery, similarity), reps)
    return {
        "records": len(messages),
        "frames": len(frames),
        "repetitions": reps,
        "stages": {"extract": extract_t, "score": score_t, "rank": rank_t},
        "result_counts": {
            "extracted": len(extracted),
            "scored": len(scores),
            "ranked": len(ranked.entries),
        },
    }
