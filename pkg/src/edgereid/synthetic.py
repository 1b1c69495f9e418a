"""Deterministic synthetic re-ID dataset for tests, demos and benchmarks.

Each identity wears a fixed palette (hair, top, trousers, shoes, skin).
Every rendered image shifts all hues by a per-image offset (a third of
``max_hue_jitter``), adds per-pixel hue noise for the remainder so the total
deviation never exceeds ``max_hue_jitter``, adds saturation and shading
noise, moves region borders by a few pixels and scales brightness by a
per-camera factor.

Files are named in Market-1501 style so the normal evaluation path applies::

    <root>/query/images/0003_c1s1_000000_00.png
    <root>/query/masks/0003_c1s1_000000_00.png
    <root>/gallery/images/...
    <root>/gallery/masks/...
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import (
    IdentityAnnotation,
    LabelMap,
    PersonImage,
    lip_schema,
    save_image,
    save_label_map,
)

WIDTH, HEIGHT = 64, 128

# LIP class indices used by the renderer
HAIR, FACE, UPPER, PANTS, LARM, RARM, LSHOE, RSHOE = 2, 13, 5, 9, 14, 15, 18, 19

CAMERA_BRIGHTNESS = {1: 1.0, 2: 0.8}


@dataclass(frozen=True)
class Palette:
    """Base (hue in degrees, saturation, value) per body region."""

    hair: tuple[float, float, float]
    top: tuple[float, float, float]
    trousers: tuple[float, float, float]
    shoes: tuple[float, float, float]
    skin: tuple[float, float, float]


@dataclass(frozen=True)
class Sample:
    name: str
    split: str
    annotation: IdentityAnnotation
    image: PersonImage
    mask: LabelMap


def identity_palette(i: int) -> Palette:
    sat = (0.45, 0.7, 0.95)
    return Palette(
        hair=((i * 53.0) % 360.0, 0.5, 0.3),
        top=((i * 137.5) % 360.0, sat[i % 3], 0.8),
        trousers=((i * 67.0 + 40.0) % 360.0, sat[(i // 3) % 3], 0.6),
        shoes=((i * 211.0) % 360.0, 0.6, 0.35),
        skin=(25.0, 0.45, 0.85),
    )


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorised hexcone HSV -> RGB; h in degrees, result uint8."""
    h = np.mod(h, 360.0) / 60.0
    c = v * s
    x = c * (1 - np.abs(np.mod(h, 2.0) - 1))
    m = v - c
    sector = np.floor(h).astype(int) % 6
    z = np.zeros_like(h)
    r = np.choose(sector, [c, x, z, z, x, c])
    g = np.choose(sector, [x, c, c, x, z, z])
    b = np.choose(sector, [z, z, x, c, c, x])
    rgb = np.stack([r + m, g + m, b + m], axis=-1)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def render_mask(rng: np.random.Generator) -> np.ndarray:
    lab = np.zeros((HEIGHT, WIDTH), dtype=np.int64)
    dy, dx = rng.integers(-2, 3, size=2)
    cx = WIDTH // 2 + dx

    def box(top, bottom, left, right, cls):
        lab[max(top + dy, 0) : min(bottom + dy, HEIGHT), max(left, 0) : min(right, WIDTH)] = cls

    box(6, 16, cx - 9, cx + 9, HAIR)
    box(16, 28, cx - 7, cx + 7, FACE)
    box(28, 68, cx - 15, cx + 15, UPPER)
    box(30, 64, cx - 22, cx - 15, LARM)
    box(30, 64, cx + 15, cx + 22, RARM)
    box(68, 112, cx - 13, cx + 13, PANTS)
    box(112, 122, cx - 14, cx - 1, LSHOE)
    box(112, 122, cx + 1, cx + 14, RSHOE)
    return lab


def render_image(
    palette: Palette,
    mask: np.ndarray,
    camera_id: int,
    rng: np.random.Generator,
    max_hue_jitter: float = 15.0,
) -> np.ndarray:
    offset_bound = max_hue_jitter / 3.0
    pixel_bound = max_hue_jitter - offset_bound
    offset = rng.uniform(-offset_bound, offset_bound)
    brightness = CAMERA_BRIGHTNESS.get(camera_id, 1.0)

    h = rng.uniform(0.0, 360.0, size=mask.shape)
    s = rng.uniform(0.0, 1.0, size=mask.shape)
    v = rng.uniform(0.2, 0.9, size=mask.shape)
    regions = {
        HAIR: palette.hair,
        FACE: palette.skin,
        LARM: palette.skin,
        RARM: palette.skin,
        UPPER: palette.top,
        PANTS: palette.trousers,
        LSHOE: palette.shoes,
        RSHOE: palette.shoes,
    }
    for cls, (bh, bs, bv) in regions.items():
        sel = mask == cls
        n = int(sel.sum())
        if not n:
            continue
        h[sel] = bh + offset + rng.uniform(-pixel_bound, pixel_bound, size=n)
        s[sel] = np.clip(bs + rng.normal(0.0, 0.1, size=n), 0.0, 1.0)
        v[sel] = np.clip((bv + rng.normal(0.0, 0.2, size=n)) * brightness, 0.0, 1.0)
    return hsv_to_rgb(h, s, v)


def generate(
    n_identities: int = 30,
    images_per_camera: int = 4,
    n_junk: int = 10,
    seed: int = 0,
    max_hue_jitter: float = 15.0,
) -> list[Sample]:
    """Render the dataset. The first image of every (identity, camera) is a query."""
    rng = np.random.default_rng(seed)
    schema = lip_schema()
    samples = []
    frame = 0
    for i in range(n_identities):
        pid = i + 1
        palette = identity_palette(i)
        for cam in (1, 2):
            for k in range(images_per_camera):
                mask = render_mask(rng)
                img = render_image(palette, mask, cam, rng, max_hue_jitter)
                name = f"{pid:04d}_c{cam}s1_{frame:06d}_00"
                split = "query" if k == 0 else "gallery"
                samples.append(
                    Sample(
                        name,
                        split,
                        IdentityAnnotation(pid, cam, 1, frame),
                        PersonImage(img),
                        LabelMap(mask, schema),
                    )
                )
                frame += 1
    for j in range(n_junk):
        cam = 1 + j % 2
        mask = render_mask(rng)
        palette = identity_palette(n_identities + j)
        img = render_image(palette, mask, cam, rng, max_hue_jitter)
        name = f"-1_c{cam}s1_{frame:06d}_00"
        samples.append(
            Sample(name, "gallery", IdentityAnnotation(-1, cam, 1, frame),
                   PersonImage(img), LabelMap(mask, schema))
        )
        frame += 1
    return samples


def write_dataset(root: str | Path, samples: list[Sample]) -> dict[str, Path]:
    """Write samples under ``root/<split>/{images,masks}``; returns split roots."""
    root = Path(root)
    out = {}
    for s in samples:
        split_root = root / s.split
        (split_root / "images").mkdir(parents=True, exist_ok=True)
        (split_root / "masks").mkdir(parents=True, exist_ok=True)
        save_image(split_root / "images" / f"{s.name}.png", s.image)
        save_label_map(split_root / "masks" / f"{s.name}.png", s.mask)
        out[s.split] = split_root
    return out
