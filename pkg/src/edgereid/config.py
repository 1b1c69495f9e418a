"""Run configuration: defaults < YAML config file < command-line flags.

Example file (every key optional, unknown keys are rejected)::

    extraction:
      color_space: HSV          # HSV | RGB
      bins: 32
      min_area_fraction: 0.005
      schema: null              # path to a schema JSON, default LIP
      merge_map: null           # path to a merge-map JSON, default LIP merge
    similarity:
      distance: intersection    # intersection | bhattacharyya | chi_square | l1
      class_weighting: area_weighted
      missing_class_policy: skip
    paths:
      dataset: null
      masks: null
      out: null
    watch:
      threshold: 0.85
    server:
      bind: 127.0.0.1:7878
      http: null                # host:port for the HTTP API, off when null
      top_k: 10
    agent:
      server: 127.0.0.1:7878
      device_id: 0
    bench:
      reps: 10
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .dataset_io import load_schema, lip_schema
from .errors import ConfigError
from .features import ClassMergeMap, ExtractionConfig, default_merge_map, load_merge_map
from .similarity import SimilarityConfig

DEFAULTS: dict[str, dict[str, Any]] = {
    "extraction": {
        "color_space": "HSV",
        "bins": 32,
        "min_area_fraction": 0.005,
        "schema": None,
        "merge_map": None,
    },
    "similarity": {
        "distance": "intersection",
        "class_weighting": "area_weighted",
        "missing_class_policy": "skip",
    },
    "paths": {"dataset": None, "masks": None, "out": None},
    "watch": {"threshold": 0.85},
    "server": {"bind": "127.0.0.1:7878", "http": None, "top_k": 10},
    "agent": {"server": "127.0.0.1:7878", "device_id": 0},
    "bench": {"reps": 10},
}


def _merge_layer(base: dict, layer: Mapping, origin: str) -> None:
    if not isinstance(layer, Mapping):
        raise ConfigError(f"{origin}: top level must be a mapping")
    for section, values in layer.items():
        if section not in base:
            raise ConfigError(f"{origin}: unknown section {section!r}")
        if values is None:
            continue
        if not isinstance(values, Mapping):
            raise ConfigError(f"{origin}: section {section!r} must be a mapping")
        for key, value in values.items():
            if key not in base[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            base[section][key] = value


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @classmethod
    def resolve(
        cls,
        config_file: str | Path | None = None,
        overrides: Mapping[str, Mapping[str, Any]] | None = None,
    ) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if config_file is not None:
            try:
                text = Path(config_file).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config file {config_file}: {exc}") from exc
            try:
                layer = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{config_file}: invalid YAML: {exc}") from exc
            _merge_layer(data, layer, str(config_file))
        if overrides:
            _merge_layer(
                data,
                {s: {k: v for k, v in kv.items() if v is not None} for s, kv in overrides.items()},
                "flags",
            )
        rc = cls(data)
        # build eagerly so invalid values fail before any work starts
        rc.extraction
        rc.similarity
        rc.threshold
        return rc

    def get(self, section: str, key: str) -> Any:
        return self.raw[section][key]

    @property
    def extraction(self) -> ExtractionConfig:
        ex = self.raw["extraction"]
        schema = load_schema(ex["schema"]) if ex["schema"] else lip_schema()
        if ex["merge_map"]:
            merge: ClassMergeMap = load_merge_map(ex["merge_map"], schema)
        elif ex["schema"]:
            merge = ClassMergeMap.identity(schema)
        else:
            merge = default_merge_map()
        try:
            return ExtractionConfig(
                color_space=str(ex["color_space"]).upper(),
                bins_per_channel=int(ex["bins"]),
                merge_map=merge,
                min_area_fraction=float(ex["min_area_fraction"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid extraction settings: {exc}") from exc

    @property
    def similarity(self) -> SimilarityConfig:
        si = self.raw["similarity"]
        return SimilarityConfig(
            distance_kind=si["distance"],
            class_weighting=si["class_weighting"],
            missing_class_policy=si["missing_class_policy"],
        )

    @property
    def threshold(self) -> float:
        try:
            t = float(self.raw["watch"]["threshold"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid threshold: {exc}") from exc
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {t}")
        return t
