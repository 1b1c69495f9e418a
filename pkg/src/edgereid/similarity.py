"""Histogram affinities and whole-vector similarity scores.

Scores are similarities in [0, 1]; higher means more alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BinCountMismatch, ConfigError, IncompatibleFeatures
from .features import FeatureVector

DISTANCE_KINDS = ("intersection", "bhattacharyya", "chi_square", "l1")
CLASS_WEIGHTINGS = ("uniform", "area_weighted")
MISSING_CLASS_POLICIES = ("skip", "penalize")


@dataclass(frozen=True)
class SimilarityConfig:
    distance_kind: str = "intersection"
    class_weighting: str = "area_weighted"
    missing_class_policy: str = "skip"

    def __post_init__(self):
        for value, allowed, name in (
            (self.distance_kind, DISTANCE_KINDS, "distance_kind"),
            (self.class_weighting, CLASS_WEIGHTINGS, "class_weighting"),
            (self.missing_class_policy, MISSING_CLASS_POLICIES, "missing_class_policy"),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


def _affinity(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """Affinity along the last axis, broadcasting over leading axes.

    Intersection and Bhattacharyya are divided by the histogram masses so
    float rounding in the normalisation cannot push affinity(h, h) off 1.
    """
    sa = a.sum(axis=-1)
    sb = b.sum(axis=-1)
    if kind == "intersection":
        num = np.minimum(a, b).sum(axis=-1)
        den = np.maximum(sa, sb)
    elif kind == "bhattacharyya":
        num = np.sqrt(a * b).sum(axis=-1)
        den = np.sqrt(sa * sb)
    elif kind == "chi_square":
        s = a + b
        d = np.where(s > 0, (a - b) ** 2 / np.where(s > 0, s, 1.0), 0.0).sum(axis=-1)
        return 1.0 / (1.0 + d)
    elif kind == "l1":
        return 1.0 / (1.0 + np.abs(a - b).sum(axis=-1))
    else:
        raise ConfigError(f"unknown distance kind {kind!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def histogram_affinity(a, b, kind: str = "intersection") -> float:
    """Affinity in [0, 1] between two histograms with equal bin counts.

    >>> histogram_affinity([0.5, 0.5, 0, 0], [0.25, 0.25, 0.25, 0.25])
    0.5
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise BinCountMismatch(f"bin counts differ: {a.shape} vs {b.shape}")
    return float(_affinity(a, b, kind))


def _check_compatible(f1: FeatureVector, f2: FeatureVector) -> None:
    if f1.config_digest != f2.config_digest:
        raise IncompatibleFeatures(
            f"feature vectors come from different extraction configs "
            f"({f1.config_digest.hex()} vs {f2.config_digest.hex()})"
        )
    if f1.histograms.shape != f2.histograms.shape:
        raise IncompatibleFeatures(
            f"feature shapes differ: {f1.histograms.shape} vs {f2.histograms.shape}"
        )


def _aggregate(p1, a1, h1, p2, a2, h2, config: SimilarityConfig) -> np.ndarray:
    """Vectorised score; arrays may carry a leading gallery axis."""
    aff = _affinity(h1, h2, config.distance_kind).mean(axis=-1)
    shared = p1 & p2
    if config.class_weighting == "uniform":
        w_shared = shared.astype(np.float64)
    else:
        w_shared = np.where(shared, (a1 + a2) / 2.0, 0.0)
    num = (w_shared * np.where(shared, aff, 0.0)).sum(axis=-1)
    den = w_shared.sum(axis=-1)
    if config.missing_class_policy == "penalize":
        only1 = p1 & ~p2
        only2 = p2 & ~p1
        if config.class_weighting == "uniform":
            w_missing = (only1 | only2).astype(np.float64)
        else:
            w_missing = np.where(only1, a1, 0.0) + np.where(only2, a2, 0.0)
        den = den + w_missing.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(score, 0.0, 1.0)


def similarity_score(
    f1: FeatureVector, f2: FeatureVector, config: SimilarityConfig | None = None
) -> float:
    config = config or SimilarityConfig()
    _check_compatible(f1, f2)
    return float(
        _aggregate(
            f1.present, f1.area, f1.histograms, f2.present, f2.area, f2.histograms, config
        )
    )


def score_many(
    query: FeatureVector, gallery: list[FeatureVector], config: SimilarityConfig | None = None
) -> np.ndarray:
    """Scores of ``query`` against every gallery vector, in gallery order.

    Each score equals ``similarity_score(query, g, config)`` exactly.
    """
    config = config or SimilarityConfig()
    if not gallery:
        return np.zeros(0, dtype=np.float64)
    for g in gallery:
        _check_compatible(query, g)
    p2 = np.stack([g.present for g in gallery])
    a2 = np.stack([g.area for g in gallery])
    h2 = np.stack([g.histograms for g in gallery])
    return _aggregate(query.present, query.area, query.histograms, p2, a2, h2, config)
