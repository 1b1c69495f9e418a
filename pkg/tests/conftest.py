import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgereid.dataset_io import IdentityAnnotation  # noqa: E402
from edgereid.features import FeatureVector  # noqa: E402

DIGEST = bytes.fromhex("0123456789abcdef")


def random_histogram(rng, bins):
    w = rng.random(bins) * (rng.random(bins) < 0.6)
    if w.sum() == 0:
        w[rng.integers(bins)] = 1.0
    return w / w.sum()


def random_features(rng, n_classes=6, bins=8, channels=3, digest=DIGEST, p_present=0.8):
    present = rng.random(n_classes) < p_present
    if not present.any():
        present[rng.integers(n_classes)] = True
    raw = rng.random(n_classes) * present
    area = raw / raw.sum()
    hist = np.zeros((n_classes, channels, bins))
    for c in np.flatnonzero(present):
        for ch in range(channels):
            hist[c, ch] = random_histogram(rng, bins)
    return FeatureVector(digest, present, area, hist)


def random_annotation(rng, n_ids, cameras=(1, 2), junk_p=0.05):
    pid = -1 if rng.random() < junk_p else int(rng.integers(1, n_ids + 1))
    return IdentityAnnotation(pid, int(rng.choice(cameras)), 1, int(rng.integers(0, 10000)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
