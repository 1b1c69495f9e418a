"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS`` / ``FAIL`` / ``SKIP`` line (visible with
``pytest tests/test_acceptance.py -s`` and also in the plain ``-v`` run).
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from conftest import random_annotation, random_features
from oracles import brute_evaluate, brute_extract, brute_score
from edgereid import synthetic
from edgereid.cli import main
from edgereid.dataset_io import LabelMap, PersonImage, lip_schema
from edgereid.features import ClassMergeMap, ExtractionConfig, features_from_pair
from edgereid.protocol import (
    CaptureMeta,
    FeatureMessage,
    decode_feature_message,
    encode_feature_message,
    encode_message,
    to_wire_precision,
)
from edgereid.ranking import (
    GalleryEntry,
    cmc_at_k,
    evaluate,
    market_valid_set,
    rank_gallery,
    ranked_from_scores,
)
from edgereid.server import RankingClient, serve_ranking
from edgereid.similarity import SimilarityConfig, score_many, similarity_score
from edgereid.store import GalleryStore, read_archive

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).parent / "data"
LIP = lip_schema()


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        assert ok, f"{name}: {detail}"

    return report


def _close(report, want, tol):
    return all(abs(report[k] - want[k]) <= tol for k in ("rank_1", "rank_5", "rank_10", "mAP")) and (
        report["query_count"] == want["query_count"] and report["skipped_queries"] == want["skipped_queries"]
    )


def test_metric_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    configs = [
        SimilarityConfig(),
        SimilarityConfig("bhattacharyya", "uniform", "penalize"),
        SimilarityConfig("chi_square", "area_weighted", "penalize"),
        SimilarityConfig("l1", "uniform", "skip"),
    ]
    t0 = time.perf_counter()
    bad = 0
    for i in range(200):
        cfg = configs[i % len(configs)]
        n_ids = int(rng.integers(1, 9))
        n_gallery = int(rng.integers(1, 51))
        gallery = [
            GalleryEntry(j, random_annotation(rng, n_ids, junk_p=0.1), random_features(rng, bins=6))
            for j in range(n_gallery)
        ]
        # duplicate a few vectors so exact score ties are exercised
        for j in rng.integers(0, n_gallery, size=n_gallery // 5):
            k = int(rng.integers(n_gallery))
            gallery[k] = GalleryEntry(k, gallery[k].annotation, gallery[int(j)].features)
        queries = [(random_annotation(rng, n_ids, junk_p=0.0), random_features(rng, bins=6)) for _ in range(rng.integers(1, 8))]
        got = evaluate(queries, gallery, cfg).to_dict()
        want = brute_evaluate(
            queries,
            gallery,
            score_fn=lambda a, b: brute_score(a, b, cfg.distance_kind, cfg.class_weighting, cfg.missing_class_policy),
        )
        bad += not _close(got, want, 1e-9)
    elapsed = time.perf_counter() - t0
    verdict("metric oracle equivalence", bad == 0 and elapsed < 10.0,
            f"200 instances, {bad} mismatches, {elapsed:.2f}s (limit 10s)")


def test_extraction_oracle_equivalence(verdict):
    rng = np.random.default_rng(77)
    merge = ClassMergeMap.identity(LIP)
    default = ExtractionConfig().merge_map
    t0 = time.perf_counter()
    bad = cases = 0
    while cases < 500:
        h, w = (int(x) for x in rng.integers(1, 9, size=2))
        px = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        # a small palette makes channel values land on bin edges more often
        if rng.random() < 0.5:
            px = rng.choice(np.array([0, 1, 127, 128, 254, 255], dtype=np.uint8), size=(h, w, 3))
        raw = rng.integers(0, LIP.class_count, (h, w))
        mm = default if rng.random() < 0.5 else merge
        if all(mm.mapping[int(v)] is None for v in raw.ravel()):
            continue
        cfg = ExtractionConfig(
            color_space=str(rng.choice(["RGB", "HSV"])),
            bins_per_channel=int(rng.integers(2, 33)),
            merge_map=mm,
            min_area_fraction=float(rng.choice([0.0, 0.1, 0.3])),
        )
        fv = features_from_pair(PersonImage(px), LabelMap(raw, LIP), cfg)
        p, a, hist = brute_extract(
            px, raw, mm.mapping, len(mm.merged_names), cfg.color_space, cfg.bins_per_channel, cfg.min_area_fraction
        )
        ok = np.array_equal(fv.present, p) and np.array_equal(fv.area, a) and np.array_equal(fv.histograms, hist)
        bad += not ok
        cases += 1
    elapsed = time.perf_counter() - t0
    verdict("extraction oracle equivalence", bad == 0 and elapsed < 10.0,
            f"{cases} instances, {bad} mismatches, {elapsed:.2f}s (limit 10s)")


def test_protocol_round_trip(verdict):
    from test_protocol import GOLDEN, GOLDEN_FV, GOLDEN_META

    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        fv = to_wire_precision(
            random_features(rng, n_classes=int(rng.integers(1, 21)), bins=int(rng.integers(1, 65)),
                            channels=int(rng.integers(1, 4)), digest=bytes(rng.integers(0, 256, 8, dtype=np.uint8)))
        )
        meta = CaptureMeta(int(rng.integers(2**32)), int(rng.integers(2**63)), random_annotation(rng, 1500))
        raw = encode_feature_message(fv, meta)
        msg = decode_feature_message(raw)
        bad += not (msg == FeatureMessage(meta, fv) and encode_message(msg) == raw)
    golden_ok = (DATA / "minimal_message.bin").read_bytes() == GOLDEN == encode_feature_message(GOLDEN_FV, GOLDEN_META)
    elapsed = time.perf_counter() - t0
    verdict("protocol round-trip", bad == 0 and golden_ok and elapsed < 5.0,
            f"1000 vectors, {bad} mismatches, golden {'unchanged' if golden_ok else 'CHANGED'}, {elapsed:.2f}s (limit 5s)")


def test_server_offline_equivalence(verdict, tmp_path):
    rng = np.random.default_rng(500)
    top_k = 10
    store = GalleryStore(tmp_path / "gallery.log")
    server = serve_ranking(store, ("127.0.0.1", 0), top_k=top_k)
    server.start_background()
    mismatches = 0
    try:
        with RankingClient(server.server_address) as client:
            for i in range(500):
                msg = FeatureMessage(
                    CaptureMeta(i % 4, 1_700_000_000_000 + i, random_annotation(rng, 50)),
                    to_wire_precision(random_features(rng, bins=16)),
                )
                assert client.submit(msg)["entry_id"] == i
            gallery = store.snapshot()
            for q in range(20):
                qv = to_wire_precision(random_features(rng, bins=16))
                resp = client.query(FeatureMessage(CaptureMeta(9, q, random_annotation(rng, 50)), qv))
                got = [(h["entry_id"], h["score"]) for h in resp["results"]]
                mismatches += got != list(rank_gallery(qv, gallery).top(top_k))
        persisted = len(read_archive(tmp_path / "gallery.log"))
    finally:
        server.shutdown()
        server.server_close()
        store.close()
    verdict("server/offline equivalence", mismatches == 0 and persisted == 500,
            f"500 submits ({persisted} persisted), 20 queries, {mismatches} top-{top_k} mismatches")


def test_end_to_end_synthetic_separability(verdict):
    t0 = time.perf_counter()
    samples = synthetic.generate()
    cfg = ExtractionConfig()
    queries, gallery = [], []
    for s in samples:
        fv = features_from_pair(s.image, s.mask, cfg)
        if s.split == "query":
            queries.append((s.annotation, fv))
        else:
            gallery.append(GalleryEntry(len(gallery), s.annotation, fv))
    report = evaluate(queries, gallery)
    elapsed = time.perf_counter() - t0
    ok = report.rank_1 >= 0.90 and report.mAP >= 0.80 and elapsed < 30.0
    verdict("end-to-end synthetic separability", ok,
            f"rank-1 {report.rank_1:.3f} (>= 0.90), mAP {report.mAP:.3f} (>= 0.80), "
            f"{report.query_count} queries, {elapsed:.2f}s (limit 30s)")


def _write_market_split(root, masks_root, names, rng):
    root.mkdir(parents=True)
    masks_root.mkdir(parents=True)
    for name in names:
        Image.fromarray(rng.integers(0, 256, (128, 64, 3), dtype=np.uint8)).save(root / f"{name}.jpg", quality=95)
        lab = np.zeros((128, 64), dtype=np.uint8)
        lab[20:60, 16:48] = 5
        lab[60:120, 20:44] = 9
        Image.fromarray(lab, mode="L").save(masks_root / f"{name}.png")
    (root / "Thumbs.db").write_bytes(b"\0")


def test_market1501_reproduction_layout(verdict, tmp_path, capsys):
    """The Market-1501 directory layout runs unchanged through extract and evaluate."""
    rng = np.random.default_rng(5)
    market = tmp_path / "Market-1501-v15.09.15"
    masks = tmp_path / "masks"
    _write_market_split(market / "query", masks / "query", ["0001_c1s1_001051_00", "0002_c2s1_000301_01"], rng)
    _write_market_split(
        market / "bounding_box_test",
        masks / "bounding_box_test",
        ["0001_c2s1_000451_03", "0001_c1s1_001101_02", "0002_c3s1_000551_04", "0000_c1s1_000151_01", "-1_c1s1_000401_03"],
        rng,
    )
    codes = [
        main(["extract", "--dataset", str(market / "query"), "--masks", str(masks / "query"), "--out", str(tmp_path / "q.bin")]),
        main(["extract", "--dataset", str(market / "bounding_box_test"), "--masks", str(masks / "bounding_box_test"),
              "--out", str(tmp_path / "g.bin")]),
    ]
    g = read_archive(tmp_path / "g.bin")
    pids = sorted(m.annotation.person_id for m in g)
    codes.append(main(["evaluate", "--query", str(tmp_path / "q.bin"), "--gallery", str(tmp_path / "g.bin"), "--json"]))
    capsys.readouterr()
    ok = codes == [0, 0, 0] and pids == [-1, 0, 1, 1, 2] and len(read_archive(tmp_path / "q.bin")) == 2
    verdict("Market-1501 reproduction: layout accepted", ok, f"exit codes {codes}, gallery ids {pids}")


MARKET_ROOT = os.environ.get("EDGEREID_MARKET1501")
MARKET_MASKS = os.environ.get("EDGEREID_MARKET1501_MASKS")


@pytest.mark.skipif(not (MARKET_ROOT and MARKET_MASKS), reason="offline experiment: Market-1501 and parser masks not present")
def test_market1501_reproduction_numbers(verdict, tmp_path, capsys):
    """Offline: rank-1 and rank-10 within 2 points of the published figures.

    Set ``EDGEREID_MARKET1501`` to the dataset root, ``EDGEREID_MARKET1501_MASKS``
    to a directory holding ``query/`` and ``bounding_box_test/`` PNG masks, and
    optionally ``EDGEREID_MARKET1501_EXPECT="rank1,rank10"`` in percent
    (default ``92.1,97`` for ResNet-101 masks, ``91.2,96.9`` for OSNet masks).
    """
    exp_r1, exp_r10 = (float(x) for x in os.environ.get("EDGEREID_MARKET1501_EXPECT", "92.1,97").split(","))
    root, masks = Path(MARKET_ROOT), Path(MARKET_MASKS)
    for split, out in (("query", "q.bin"), ("bounding_box_test", "g.bin")):
        assert main(["extract", "--dataset", str(root / split), "--masks", str(masks / split),
                     "--out", str(tmp_path / out)]) == 0
    q = [(m.annotation, m.features) for m in read_archive(tmp_path / "q.bin")]
    g = [GalleryEntry(i, m.annotation, m.features) for i, m in enumerate(read_archive(tmp_path / "g.bin"))]
    report = evaluate(q, g, workers=os.cpu_count() or 1)
    capsys.readouterr()
    r1, r10 = 100 * report.rank_1, 100 * report.rank_10
    verdict("Market-1501 reproduction: numbers", abs(r1 - exp_r1) <= 2.0 and abs(r10 - exp_r10) <= 2.0,
            f"rank-1 {r1:.1f} (expected {exp_r1}), rank-10 {r10:.1f} (expected {exp_r10}), mAP {100 * report.mAP:.1f}")


def test_market1501_reproduction_offline_notice(capsys):
    if MARKET_ROOT and MARKET_MASKS:
        pytest.skip("data present; the numeric check runs instead")
    with capsys.disabled():
        print("\nSKIP  Market-1501 reproduction: numbers  offline experiment, dataset not present (see README)")


def test_invariant_histogram_normalisation(verdict):
    rng = np.random.default_rng(1)
    cases = bad = 0
    for _ in range(150):
        h, w = (int(x) for x in rng.integers(1, 24, size=2))
        raw = rng.integers(0, LIP.class_count, (h, w))
        raw[0, 0] = 5
        cfg = ExtractionConfig(color_space=str(rng.choice(["RGB", "HSV"])), bins_per_channel=int(rng.integers(2, 40)),
                               min_area_fraction=float(rng.choice([0.0, 0.05])))
        fv = features_from_pair(PersonImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)), LabelMap(raw, LIP), cfg)
        sums = fv.histograms.sum(axis=2)
        ok = np.allclose(sums[fv.present], 1.0, atol=1e-12) and np.all(sums[~fv.present] == 0)
        ok &= bool(np.all(fv.histograms >= 0)) and fv.area.sum() <= 1.0 + 1e-12  # below-threshold classes drop out
        bad += not ok
        cases += 1
    verdict("invariant: histogram normalisation", bad == 0 and cases >= 100, f"{cases} cases, {bad} violations")


def test_invariant_similarity(verdict):
    rng = np.random.default_rng(2)
    kinds = ["intersection", "bhattacharyya", "chi_square", "l1"]
    cases = bad = 0
    for i in range(200):
        cfg = SimilarityConfig(kinds[i % 4], ("uniform", "area_weighted")[i % 2], ("skip", "penalize")[(i // 2) % 2])
        bins = int(rng.integers(1, 33))
        a, b = random_features(rng, bins=bins), random_features(rng, bins=bins)
        s_ab, s_ba = similarity_score(a, b, cfg), similarity_score(b, a, cfg)
        ok = s_ab == s_ba and 0.0 <= s_ab <= 1.0 and similarity_score(a, a, cfg) == 1.0
        bad += not ok
        cases += 1
    verdict("invariant: similarity symmetry/range/reflexivity", bad == 0 and cases >= 100,
            f"{cases} cases, {bad} violations")


def test_invariant_cmc_monotone(verdict):
    rng = np.random.default_rng(3)
    cases = bad = 0
    for _ in range(150):
        n = int(rng.integers(1, 40))
        gallery = [GalleryEntry(j, random_annotation(rng, 5, junk_p=0.1), random_features(rng, bins=4)) for j in range(n)]
        queries = [(random_annotation(rng, 5, junk_p=0.0), random_features(rng, bins=4)) for _ in range(5)]
        per_query = []
        for qa, qf in queries:
            pos, ign = market_valid_set(qa, [g.annotation for g in gallery])
            if pos:
                per_query.append((rank_gallery(qf, gallery), pos, ign))
        curve = [np.mean([cmc_at_k(r, p, ig, k) for r, p, ig in per_query]) if per_query else 0.0
                 for k in range(1, n + 2)]
        bad += any(b < a for a, b in zip(curve, curve[1:])) or any(not 0.0 <= c <= 1.0 for c in curve)
        cases += 1
    verdict("invariant: CMC monotone in k", bad == 0 and cases >= 100, f"{cases} cases, {bad} violations")


def test_invariant_rank_transform(verdict):
    rng = np.random.default_rng(4)
    transforms = [lambda s: s**3, lambda s: np.exp(5 * s) - 7, lambda s: np.log1p(s) * 2 + 1, lambda s: s / (2 - s)]
    cases = bad = 0
    for i in range(200):
        n = int(rng.integers(1, 60))
        gallery = [random_features(rng, bins=5) for _ in range(n)]
        scores = score_many(random_features(rng, bins=5), gallery)
        scores[rng.integers(0, n, size=n // 4)] = scores[0]  # ties
        base = ranked_from_scores(list(range(n)), scores).entry_ids
        bad += ranked_from_scores(list(range(n)), transforms[i % 4](scores)).entry_ids != base
        cases += 1
    verdict("invariant: ranking invariant under increasing transforms", bad == 0 and cases >= 100,
            f"{cases} cases, {bad} violations")
