"""``edgereid`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Iterator, Sequence

from . import synthetic
from .bench import run_bench
from .config import RunConfig
from .dataset_io import (
    IdentityAnnotation,
    PairPaths,
    discover_pairs,
    load_image,
    load_label_map,
    parse_market_filename,
)
from .errors import ConfigError, DataError, FilenameParseError, ReidError
from .features import ExtractionConfig, features_from_pair
from .protocol import CaptureMeta, FeatureMessage, to_wire_precision
from .ranking import GalleryEntry, evaluate, rank_gallery
from .server import RankingClient, parse_address, serve_ranking
from .store import GalleryStore, read_archive, write_archive
from .watch import Frame, load_watchlist, watch, write_alerts

log = logging.getLogger("edgereid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--bins", type=int)
    p.add_argument("--color-space", choices=["HSV", "RGB", "hsv", "rgb"])
    p.add_argument("--distance", choices=["intersection", "bhattacharyya", "chi_square", "l1"])
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="edgereid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="images + masks -> feature archive")
    p.add_argument("--dataset")
    p.add_argument("--masks")
    p.add_argument("--out")
    p.add_argument("--device-id", type=int)

    p = sub.add_parser("rank", parents=[common], help="rank a gallery archive per query")
    p.add_argument("--query", required=True, help="query feature archive")
    p.add_argument("--gallery", required=True, help="gallery feature archive")
    p.add_argument("--top-k", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="CMC rank-k and mAP")
    p.add_argument("--query", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="also write the JSON report here")

    p = sub.add_parser("serve", parents=[common], help="TCP ranking server")
    p.add_argument("--store", required=True, help="append-only gallery log")
    p.add_argument("--bind")
    p.add_argument("--http", help="also serve the HTTP API on host:port")
    p.add_argument("--top-k", type=int)
    p.add_argument("--fsync", action="store_true")

    p = sub.add_parser("agent", parents=[common], help="extract and stream to a server")
    p.add_argument("--dataset")
    p.add_argument("--masks")
    p.add_argument("--server")
    p.add_argument("--device-id", type=int)
    p.add_argument("--mode", choices=["submit", "query"], default="submit")

    p = sub.add_parser("watch", parents=[common], help="watchlist detector")
    p.add_argument("--watchlist", required=True, help="watchlist JSON or feature archive")
    p.add_argument("--dataset")
    p.add_argument("--masks")
    p.add_argument("--threshold", type=float)
    p.add_argument("--device-id", type=int)
    p.add_argument("--out", help="NDJSON alert file, stdout by default")

    p = sub.add_parser("bench", parents=[common], help="per-stage timings")
    p.add_argument("--archive", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--dataset", help="image/mask pairs to time extraction on")
    p.add_argument("--masks")

    p = sub.add_parser("synth", parents=[common], help="write the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    overrides = {
        "extraction": {"bins": g("bins"), "color_space": g("color_space")},
        "similarity": {"distance": g("distance")},
        "watch": {"threshold": g("threshold")},
        "server": {"bind": g("bind"), "top_k": g("top_k"), "http": g("http")},
        "agent": {"server": g("server"), "device_id": g("device_id")},
        "bench": {"reps": g("reps")},
        "paths": {"dataset": g("dataset"), "masks": g("masks"), "out": g("out")},
    }
    return RunConfig.resolve(args.config, overrides)


def _require(cfg: RunConfig, section: str, key: str, flag: str):
    value = cfg.get(section, key)
    if value in (None, ""):
        raise UsageError(f"{flag} is required (or set {section}.{key} in the config file)")
    return value


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json or text is None:
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def _annotation_for(pair: PairPaths, ordinal: int):
    try:
        return parse_market_filename(pair.image.name)
    except FilenameParseError:
        return IdentityAnnotation(-1, 1, 1, ordinal)


def iter_pair_messages(
    pairs: Sequence[PairPaths], extraction: ExtractionConfig, device_id: int, failures: list
) -> Iterator[FeatureMessage]:
    schema = extraction.merge_map.source_schema
    for n, pair in enumerate(pairs):
        try:
            if pair.mask is None:
                raise DataError(f"no mask for {pair.image.name}")
            image = load_image(pair.image)
            mask = load_label_map(pair.mask, schema)
            fv = features_from_pair(image, mask, extraction)
        except ReidError as exc:
            log.warning("%s: %s", pair.stem, exc)
            failures.append((pair.stem, str(exc)))
            continue
        ts = int(pair.image.stat().st_mtime * 1000)
        meta = CaptureMeta(device_id, ts, _annotation_for(pair, n))
        yield FeatureMessage(meta, to_wire_precision(fv))


def _pairs(cfg: RunConfig) -> list[PairPaths]:
    root = _require(cfg, "paths", "dataset", "--dataset")
    if not Path(root).is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    pairs = discover_pairs(root, cfg.get("paths", "masks"))
    if not pairs:
        raise DataError(f"no images found under {root}")
    return pairs


def cmd_extract(args, cfg: RunConfig) -> int:
    out = _require(cfg, "paths", "out", "--out")
    pairs = _pairs(cfg)
    failures: list = []
    messages = list(
        iter_pair_messages(pairs, cfg.extraction, int(cfg.get("agent", "device_id")), failures)
    )
    if not messages:
        raise DataError(f"all {len(pairs)} pairs failed")
    write_archive(out, messages)
    _emit(
        args,
        {"records": len(messages), "failures": [f for f, _ in failures], "out": str(out)},
        f"wrote {len(messages)} records to {out} ({len(failures)} failures)",
    )
    return EXIT_OK


def _load_archive(path: str) -> list[FeatureMessage]:
    msgs = read_archive(path)
    if not msgs:
        raise DataError(f"archive {path} holds no records")
    return msgs


def _gallery(msgs: Sequence[FeatureMessage]) -> list[GalleryEntry]:
    return [GalleryEntry(i, m.annotation, m.features) for i, m in enumerate(msgs)]


def cmd_rank(args, cfg: RunConfig) -> int:
    queries = _load_archive(args.query)
    gallery = _gallery(_load_archive(args.gallery))
    k = int(cfg.get("server", "top_k"))
    results = []
    for qi, q in enumerate(queries):
        ranked = rank_gallery(q.features, gallery, cfg.similarity, query_id=qi)
        results.append(
            {"query": qi, "hits": [{"entry_id": e, "score": s} for e, s in ranked.top(k)]}
        )
    lines = []
    for r in results:
        hits = " ".join(f"{h['entry_id']}:{h['score']:.4f}" for h in r["hits"])
        lines.append(f"query {r['query']}: {hits}")
    _emit(args, {"results": results}, "\n".join(lines))
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    queries = [(m.annotation, m.features) for m in _load_archive(args.query)]
    gallery = _gallery(_load_archive(args.gallery))
    report = evaluate(queries, gallery, cfg.similarity, workers=args.workers)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    if not args.json:
        print(report.to_table())
    return EXIT_OK


def cmd_serve(args, cfg: RunConfig) -> int:
    host, port = parse_address(cfg.get("server", "bind"))
    store = GalleryStore(args.store, fsync=args.fsync)
    top_k = int(cfg.get("server", "top_k"))
    server = serve_ranking(store, (host, port), cfg.similarity, top_k)
    log.info("ranking server on %s:%d, %d gallery records", host, server.server_address[1], len(store))
    http = cfg.get("server", "http")
    try:
        if http:
            import uvicorn

            from .service import create_app

            server.start_background()
            h_host, h_port = parse_address(http)
            uvicorn.run(create_app(store, cfg.similarity, top_k), host=h_host, port=h_port)
            server.shutdown()
        else:
            server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()
    return EXIT_OK


def cmd_agent(args, cfg: RunConfig) -> int:
    address = parse_address(cfg.get("agent", "server"))
    pairs = _pairs(cfg)
    failures: list = []
    sent = errors = 0
    with RankingClient(address) as client:
        for msg in iter_pair_messages(
            pairs, cfg.extraction, int(cfg.get("agent", "device_id")), failures
        ):
            resp = client.submit(msg) if args.mode == "submit" else client.query(msg)
            if resp.get("status") != "ok":
                errors += 1
                log.warning("server rejected record: %s", resp)
            else:
                sent += 1
            if args.json or args.mode == "query":
                print(json.dumps(resp))
    if not args.json:
        print(f"sent {sent} records ({errors} rejected, {len(failures)} extraction failures)")
    if sent == 0:
        raise DataError("no records were accepted")
    return EXIT_OK


def _frames(pairs, extraction: ExtractionConfig, device_id: int) -> Iterator[Frame]:
    schema = extraction.merge_map.source_schema
    for n, pair in enumerate(pairs):
        try:
            if pair.mask is None:
                raise DataError(f"no mask for {pair.image.name}")
            image = load_image(pair.image)
            mask = load_label_map(pair.mask, schema)
        except ReidError as exc:
            log.warning("frame %s skipped: %s", pair.stem, exc)
            continue
        ts = int(pair.image.stat().st_mtime * 1000)
        yield Frame(image, mask, device_id, ts, _annotation_for(pair, n))


def cmd_watch(args, cfg: RunConfig) -> int:
    watchlist = load_watchlist(args.watchlist)
    pairs = _pairs(cfg)
    frames = _frames(pairs, cfg.extraction, int(cfg.get("agent", "device_id")))
    alerts = watch(watchlist, frames, cfg.threshold, cfg.extraction, cfg.similarity)
    out = cfg.get("paths", "out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            n = write_alerts(alerts, fh)
        print(f"{n} alerts written to {out}", file=sys.stderr)
    else:
        write_alerts(alerts, sys.stdout)
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    reps = int(cfg.get("bench", "reps"))
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    messages = _load_archive(args.archive)
    extraction = cfg.extraction
    if cfg.get("paths", "dataset"):
        frames = []
        for pair in _pairs(cfg):
            if pair.mask is not None:
                frames.append(
                    (load_image(pair.image), load_label_map(pair.mask, extraction.merge_map.source_schema))
                )
    else:
        frames = [(s.image, s.mask) for s in synthetic.generate(n_identities=5, images_per_camera=1, n_junk=0)]
    report = run_bench(messages, frames, extraction, cfg.similarity, reps)
    st = report["stages"]
    text = "\n".join(
        [f"{'stage':<8}{'first ms':>12}{'median ms':>12}"]
        + [f"{k:<8}{v['first_ms']:>12.3f}{v['median_ms']:>12.3f}" for k, v in st.items()]
    )
    _emit(args, report, text)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    samples = synthetic.generate(n_identities=args.identities, seed=args.seed)
    roots = synthetic.write_dataset(args.out, samples)
    _emit(
        args,
        {"samples": len(samples), "splits": {k: str(v) for k, v in roots.items()}},
        f"wrote {len(samples)} samples under {args.out}",
    )
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
    "agent": cmd_agent,
    "watch": cmd_watch,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"edgereid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReidError as exc:
        print(f"edgereid: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"edgereid: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
