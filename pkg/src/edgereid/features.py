"""Class merging and per-class colour histograms.

A :class:`FeatureVector` holds, for every merged class, whether the class is
present, the fraction of foreground pixels it covers, and one normalised
histogram per colour channel.  Arrays are stored stacked so that similarity
scoring can work on whole vectors at once::

    present     (n_classes,)                   bool
    area        (n_classes,)                   float64
    histograms  (n_classes, n_channels, bins)  float64
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset_io import LabelMap, LabelSchema, PersonImage, lip_schema, validate_pair
from .errors import ConfigError, DataError, NoPersonPixels, SchemaMismatch

DISCARD = None
# label value used for DISCARD pixels in a merged label map
MERGED_DISCARD_LABEL = 0

COLOR_SPACES = ("RGB", "HSV")

# (lo, hi) per channel; bins are equal-width over [lo, hi] with the last bin closed
CHANNEL_RANGES = {
    "RGB": ((0.0, 255.0), (0.0, 255.0), (0.0, 255.0)),
    "HSV": ((0.0, 360.0), (0.0, 1.0), (0.0, 1.0)),
}


@dataclass(frozen=True)
class ClassMergeMap:
    """Maps every source class to a merged class index, or to DISCARD (None).

    In a merged :class:`LabelMap` label 0 is DISCARD and merged class ``k``
    is stored as ``k + 1``.
    """

    source_schema: LabelSchema
    merged_names: tuple[str, ...]
    mapping: tuple[int | None, ...]

    def __post_init__(self):
        if len(self.mapping) != self.source_schema.class_count:
            raise ConfigError(
                f"merge map covers {len(self.mapping)} classes, schema "
                f"{self.source_schema.name!r} has {self.source_schema.class_count}"
            )
        if self.mapping[self.source_schema.background_index] is not DISCARD:
            raise ConfigError("background class must map to DISCARD")
        for src, dst in enumerate(self.mapping):
            if dst is not DISCARD and not 0 <= dst < len(self.merged_names):
                raise ConfigError(f"class {src} maps to unknown merged index {dst}")

    @property
    def merged_schema(self) -> LabelSchema:
        names = ("discard",) + tuple(self.merged_names)
        return LabelSchema(f"{self.source_schema.name}-merged", len(names), names, 0)

    def lookup_table(self) -> np.ndarray:
        return np.array(
            [MERGED_DISCARD_LABEL if d is DISCARD else d + 1 for d in self.mapping],
            dtype=np.int32,
        )

    @classmethod
    def identity(cls, schema: LabelSchema) -> "ClassMergeMap":
        """One merged class per non-background source class, order preserved."""
        names, mapping = [], []
        for i, n in enumerate(schema.class_names):
            if i == schema.background_index:
                mapping.append(DISCARD)
            else:
                mapping.append(len(names))
                names.append(n)
        return cls(schema, tuple(names), tuple(mapping))

    @classmethod
    def from_dict(cls, data: dict, schema: LabelSchema | None = None) -> "ClassMergeMap":
        schema = schema or lip_schema()
        if data.get("source_schema", schema.name) != schema.name:
            raise SchemaMismatch(
                f"merge map is for schema {data['source_schema']!r}, not {schema.name!r}"
            )
        try:
            return cls(
                schema,
                tuple(str(n) for n in data["merged_names"]),
                tuple(None if m is None else int(m) for m in data["mapping"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid merge map document: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "source_schema": self.source_schema.name,
            "merged_names": list(self.merged_names),
            "mapping": list(self.mapping),
        }


def load_merge_map(path: str | Path, schema: LabelSchema | None = None) -> ClassMergeMap:
    with open(path, encoding="utf-8") as fh:
        return ClassMergeMap.from_dict(json.load(fh), schema)


def default_merge_map() -> ClassMergeMap:
    text = (
        resources.files("edgereid.data")
        .joinpath("lip_default_merge.json")
        .read_text("utf-8")
    )
    return ClassMergeMap.from_dict(json.loads(text), lip_schema())


@dataclass(frozen=True)
class ExtractionConfig:
    color_space: str = "HSV"
    bins_per_channel: int = 32
    merge_map: ClassMergeMap = field(default_factory=default_merge_map)
    min_area_fraction: float = 0.005

    def __post_init__(self):
        if self.color_space not in COLOR_SPACES:
            raise ConfigError(f"color_space must be one of {COLOR_SPACES}")
        if int(self.bins_per_channel) != self.bins_per_channel or self.bins_per_channel < 2:
            raise ConfigError("bins_per_channel must be an integer >= 2")
        if not 0.0 <= self.min_area_fraction < 1.0:
            raise ConfigError("min_area_fraction must lie in [0, 1)")

    def canonical(self) -> dict:
        return {
            "color_space": self.color_space,
            "bins_per_channel": int(self.bins_per_channel),
            "merge_map": {
                "source_schema": self.merge_map.source_schema.to_dict(),
                "merged_names": list(self.merge_map.merged_names),
                "mapping": list(self.merge_map.mapping),
            },
            "min_area_fraction": float(self.min_area_fraction).hex(),
        }

    def digest(self) -> bytes:
        """Stable 8-byte hash identifying feature vectors that may be compared."""
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()


def merge_classes(mask: LabelMap, merge_map: ClassMergeMap) -> LabelMap:
    if mask.schema != merge_map.source_schema:
        raise SchemaMismatch(
            f"mask schema {mask.schema.name!r} does not match merge map "
            f"schema {merge_map.source_schema.name!r}"
        )
    return LabelMap(merge_map.lookup_table()[mask.labels], merge_map.merged_schema)


def convert_color_space(image: PersonImage, space: str) -> np.ndarray:
    """Return a float64 (H, W, 3) array of channel values in ``space``.

    HSV uses the hexcone model with H in degrees [0, 360) and S, V in [0, 1];
    achromatic pixels get hue 0.  The arithmetic follows the operation order
    of :func:`colorsys.rgb_to_hsv` so results are bit-identical to it.
    """
    px = image.pixels.astype(np.float64)
    if space == "RGB":
        return px
    if space != "HSV":
        raise ConfigError(f"unknown color space {space!r}")
    rgb = px / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    chroma = maxc - minc
    gray = chroma == 0
    safe_chroma = np.where(gray, 1.0, chroma)
    safe_max = np.where(maxc == 0, 1.0, maxc)
    s = np.where(gray, 0.0, chroma / safe_max)
    rc = (maxc - r) / safe_chroma
    gc = (maxc - g) / safe_chroma
    bc = (maxc - b) / safe_chroma
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(gray, 0.0, np.remainder(h / 6.0, 1.0))
    return np.stack([h * 360.0, s, maxc], axis=-1)


def bin_indices(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    config_digest: bytes
    present: np.ndarray
    area: np.ndarray
    histograms: np.ndarray

    def __post_init__(self):
        if len(self.config_digest) != 8:
            raise DataError("config_digest must be 8 bytes")
        present = np.ascontiguousarray(self.present, dtype=bool)
        area = np.ascontiguousarray(self.area, dtype=np.float64)
        hist = np.ascontiguousarray(self.histograms, dtype=np.float64)
        if hist.ndim != 3:
            raise DataError("histograms must be a 3-D array")
        if present.shape != (hist.shape[0],) or area.shape != (hist.shape[0],):
            raise DataError("inconsistent feature vector shapes")
        for arr in (present, area, hist):
            arr.setflags(write=False)
        object.__setattr__(self, "config_digest", bytes(self.config_digest))
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "histograms", hist)

    @property
    def class_count(self) -> int:
        return self.histograms.shape[0]

    @property
    def channel_count(self) -> int:
        return self.histograms.shape[1]

    @property
    def bins(self) -> int:
        return self.histograms.shape[2]

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.config_digest == other.config_digest
            and np.array_equal(self.present, other.present)
            and np.array_equal(self.area, other.area)
            and np.array_equal(self.histograms, other.histograms)
        )

    def __hash__(self):
        return hash((self.config_digest, self.histograms.tobytes(), self.area.tobytes()))

    def to_json_dict(self) -> dict:
        """Canonical JSON form. Key order: config_digest, classes[present,
        area_fraction, histograms]."""
        return {
            "config_digest": self.config_digest.hex(),
            "classes": [
                {
                    "present": bool(self.present[i]),
                    "area_fraction": float(self.area[i]),
                    "histograms": [[float(x) for x in ch] for ch in self.histograms[i]],
                }
                for i in range(self.class_count)
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FeatureVector":
        try:
            classes = data["classes"]
            return cls(
                bytes.fromhex(data["config_digest"]),
                np.array([bool(c["present"]) for c in classes], dtype=bool),
                np.array([float(c["area_fraction"]) for c in classes], dtype=np.float64),
                np.array([c["histograms"] for c in classes], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise DataError(f"invalid feature vector document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def class_pixel_counts(merged: LabelMap, n_classes: int) -> np.ndarray:
    """Pixel count per merged class (DISCARD excluded)."""
    counts = np.bincount(merged.labels.ravel(), minlength=n_classes + 1)
    return counts[1 : n_classes + 1]


def extract_features(
    image: PersonImage, mask: LabelMap, config: ExtractionConfig
) -> FeatureVector:
    """Per-class colour histograms for a mask already in the merged schema."""
    validate_pair(image, mask)
    merged_schema = config.merge_map.merged_schema
    if mask.schema != merged_schema:
        raise SchemaMismatch("extract_features needs a mask in the merged schema")
    n_classes = len(config.merge_map.merged_names)
    bins = int(config.bins_per_channel)

    labels = mask.labels.ravel()
    counts = class_pixel_counts(mask, n_classes)
    foreground = int(counts.sum())
    if foreground == 0:
        raise NoPersonPixels("mask contains no person pixels")

    area = counts / foreground
    present = (counts > 0) & (area >= config.min_area_fraction)

    channels = convert_color_space(image, config.color_space).reshape(-1, 3)
    hist = np.zeros((n_classes, 3, bins), dtype=np.float64)
    fg = labels != MERGED_DISCARD_LABEL
    cls_of_px = labels[fg] - 1
    for ch, (lo, hi) in enumerate(CHANNEL_RANGES[config.color_space]):
        idx = bin_indices(channels[fg, ch], lo, hi, bins)
        flat = np.bincount(cls_of_px * bins + idx, minlength=n_classes * bins)
        hist[:, ch, :] = flat.reshape(n_classes, bins)
    denom = np.where(counts > 0, counts, 1).astype(np.float64)
    hist /= denom[:, None, None]
    hist[~present] = 0.0
    area = np.where(present, area, 0.0)
    return FeatureVector(config.digest(), present, area, hist)


def features_from_pair(
    image: PersonImage, mask: LabelMap, config: ExtractionConfig
) -> FeatureVector:
    """Validate, merge classes and extract in one step from a raw parser mask."""
    validate_pair(image, mask)
    return extract_features(image, merge_classes(mask, config.merge_map), config)

