"""Loading person images, parsing label maps and Market-1501 annotations.

On-disk layout::

    <root>/images/<stem>.jpg|png
    <root>/masks/<stem>.png       single-channel, pixel value = class index

Nothing here resizes. A mask whose geometry differs from its image is an
error, never something to fix silently.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DataError,
    DimensionMismatch,
    FilenameParseError,
    ImageDecodeError,
    SchemaViolation,
)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSchema:
    name: str
    class_count: int
    class_names: tuple[str, ...]
    background_index: int

    def __post_init__(self):
        if len(self.class_names) != self.class_count:
            raise DataError(
                f"schema {self.name!r}: {len(self.class_names)} names for "
                f"{self.class_count} classes"
            )
        if not 0 <= self.background_index < self.class_count:
            raise DataError(f"schema {self.name!r}: background index out of range")

    @classmethod
    def from_dict(cls, data: dict) -> "LabelSchema":
        try:
            return cls(
                name=str(data["name"]),
                class_count=int(data["class_count"]),
                class_names=tuple(str(n) for n in data["class_names"]),
                background_index=int(data["background_index"]),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid schema document: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "class_count": self.class_count,
            "class_names": list(self.class_names),
            "background_index": self.background_index,
        }


def load_schema(path: str | Path) -> LabelSchema:
    with open(path, encoding="utf-8") as fh:
        return LabelSchema.from_dict(json.load(fh))


def lip_schema() -> LabelSchema:
    """The 20-class LIP schema (background plus 19 body parts)."""
    text = resources.files("edgereid.data").joinpath("lip.json").read_text("utf-8")
    return LabelSchema.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PersonImage:
    """RGB image, ``pixels`` has shape (height, width, 3) and dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise DataError(f"expected HxWx3 uint8 pixels, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError("image has a zero dimension")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PersonImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray
    schema: LabelSchema

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise DataError(f"label map must be a non-empty 2-D array, got {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise DataError(f"label map must hold integers, got {lab.dtype}")
        bad = np.argwhere((lab < 0) | (lab >= self.schema.class_count))
        if len(bad):
            r, c = (int(v) for v in bad[0])
            raise SchemaViolation(int(lab[r, c]), r, c, self.schema.class_count)
        object.__setattr__(self, "labels", _frozen(lab.astype(np.int32, copy=False)))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def is_empty_foreground(self) -> bool:
        return bool(np.all(self.labels == self.schema.background_index))

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class IdentityAnnotation:
    person_id: int
    camera_id: int
    sequence_id: int
    frame_index: int

    def __post_init__(self):
        if self.person_id < -1:
            raise DataError(f"person_id must be >= -1, got {self.person_id}")
        if self.camera_id < 1 or self.sequence_id < 1 or self.frame_index < 0:
            raise DataError(f"invalid annotation fields: {self}")

    @property
    def is_junk(self) -> bool:
        return self.person_id == -1


def _open(path: Path) -> Image.Image:
    if not path.is_file():
        raise ImageDecodeError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    if img.width < 1 or img.height < 1:
        raise ImageDecodeError(f"{path} has a zero dimension")
    return img


def load_image(path: str | Path) -> PersonImage:
    img = _open(Path(path))
    if img.format not in ("PNG", "JPEG"):
        raise ImageDecodeError(f"{path}: unsupported format {img.format}")
    # grayscale, palette and alpha inputs all become plain RGB
    return PersonImage(np.asarray(img.convert("RGB"), dtype=np.uint8))


def load_label_map(path: str | Path, schema: LabelSchema) -> LabelMap:
    img = _open(Path(path))
    if img.format != "PNG":
        raise ImageDecodeError(f"{path}: masks must be PNG, got {img.format}")
    if img.mode not in ("L", "P", "I", "I;16", "1"):
        raise ImageDecodeError(
            f"{path}: mask must be single-channel (indexed or grayscale), got mode {img.mode}"
        )
    return LabelMap(np.asarray(img).astype(np.int64), schema)


def save_label_map(path: str | Path, mask: LabelMap) -> None:
    if mask.schema.class_count > 256:
        raise DataError("only schemas with <= 256 classes fit an 8-bit mask PNG")
    Image.fromarray(mask.labels.astype(np.uint8), mode="L").save(path, format="PNG")


def save_image(path: str | Path, image: PersonImage) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(path)


_MARKET_RE = re.compile(
    r"^(?P<pid>-1|\d+)_c(?P<cam>\d+)s(?P<seq>\d+)_(?P<frame>\d+)_(?P<suffix>\d+)"
    r"\.(?P<ext>[A-Za-z]+)$"
)


def parse_market_filename(name: str) -> IdentityAnnotation:
    """Parse ``<pid>_c<cam>s<seq>_<frame>_<bbox>.<ext>``.

    >>> parse_market_filename("0002_c1s1_000451_03.jpg")
    IdentityAnnotation(person_id=2, camera_id=1, sequence_id=1, frame_index=451)
    """
    if not isinstance(name, str):
        raise FilenameParseError(repr(name))
    m = _MARKET_RE.match(name)
    if m is None:
        raise FilenameParseError(name)
    try:
        return IdentityAnnotation(
            person_id=int(m["pid"]),
            camera_id=int(m["cam"]),
            sequence_id=int(m["seq"]),
            frame_index=int(m["frame"]),
        )
    except DataError as exc:
        raise FilenameParseError(name) from exc


def validate_pair(image: PersonImage, mask: LabelMap) -> tuple[PersonImage, LabelMap]:
    if image.pixels.shape[:2] != mask.labels.shape:
        raise DimensionMismatch(image.pixels.shape[:2], mask.labels.shape)
    return image, mask


@dataclass(frozen=True)
class PairPaths:
    stem: str
    image: Path
    mask: Path | None


def discover_pairs(root: str | Path, mask_root: str | Path | None = None) -> list[PairPaths]:
    """List ``images/`` under ``root`` with their same-stem mask, sorted by stem.

    ``mask`` is None when no mask with the same stem exists.
    """
    root = Path(root)
    image_dir = root / "images" if (root / "images").is_dir() else root
    mask_dir = Path(mask_root) if mask_root is not None else root / "masks"
    pairs = []
    for p in sorted(image_dir.iterdir()) if image_dir.is_dir() else []:
        if p.suffix.lower() not in IMAGE_SUFFIXES or not p.is_file():
            continue
        m = mask_dir / f"{p.stem}.png"
        pairs.append(PairPaths(p.stem, p, m if m.is_file() else None))
    return pairs
