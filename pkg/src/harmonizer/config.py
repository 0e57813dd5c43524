"""Run configuration: layered defaults -> YAML file -> environment overrides.

Environment variables use the ``HARMONIZER_<SECTION>_<KEY>`` convention
(``HARMONIZER_GRAPH_THRESHOLD=2.5``, ``HARMONIZER_MATCH_WEIGHTS_COS=0.8``);
values are parsed as YAML scalars. Unknown keys anywhere are rejected, and the
fully resolved config is serializable and hashable for the run manifest.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .errors import ConfigError
from .graph import FilterParams
from .match import WeightVector
from .tune import DEFAULT_SPACE, SearchSpace, TpeConfig

ENV_PREFIX = "HARMONIZER_"

DEFAULTS: dict[str, Any] = {
    "run": {
        "seed": 0,
        "threads": 1,
        "offline": False,
    },
    "ingest": {
        "institution_keywords": None,
    },
    "augment": {
        "blocklist_k": 100,
        "provider": {
            "endpoint": "",
            "query_param": "q",
            "suggestion_selector": "a.spelling-suggestion",
            "result_selector": "a.result-link",
            "rate_limit_per_s": 1.0,
            "timeout_s": 10.0,
            "retries": 3,
        },
    },
    "parse": {
        "common_words_n": 250,
        "designators": None,
        "interior_strip": False,
    },
    "embed": {
        "backend": "hashing",
        "dim": 256,
        "seed": 0,
        "vectors_path": None,
        "strict_vectors": False,
        "idf_floor": 0.01,
    },
    "match": {
        "cos_on": "cleaned",
        "brute_force": False,
        "weights": {
            "token": 1.0,
            "first_token": 1.0,
            "url_text": 1.0,
            "domain": 1.0,
            "cos": 1.0,
        },
    },
    "graph": {
        "threshold": 3.9,
        "resolution": 1.0,
        "bridgeness_threshold": 1.0,
        "location_boost": 1.0,
        "prune_rule": "incident",
        "naming": "centroid",
        "refine_passes": 1,
        "refine_until_stable": False,
    },
    "tune": {
        "gamma": 0.25,
        "n_startup": 10,
        "n_candidates": 24,
        "trials": 50,
        "space": {name: [lo, hi] for name, lo, hi in DEFAULT_SPACE},
    },
}

# Paths and free-form selector strings may replace None or "" with any string;
# numeric defaults pin their type.
_NULLABLE_KEYS = {
    ("ingest", "institution_keywords"),
    ("parse", "designators"),
    ("embed", "vectors_path"),
}


def _merge(base: dict, override: Mapping, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        current = base[key]
        if isinstance(current, dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {here!r} must be a mapping")
            out[key] = _merge(current, value, here)
        else:
            out[key] = _coerce(current, value, here)
    return out


def _coerce(default: Any, value: Any, path: str) -> Any:
    if value is None:
        key_tail = tuple(path.split(".")[-2:])
        if default is None or key_tail in _NULLABLE_KEYS:
            return None
        raise ConfigError(f"config key {path!r} may not be null")
    if default is None:
        if not isinstance(value, str):
            raise ConfigError(f"config key {path!r} must be a path string")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {path!r} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {path!r} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {path!r} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {path!r} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key {path!r} must be a list, got {value!r}")
        return list(value)
    raise ConfigError(f"config key {path!r} has unsupported type {type(default).__name__}")


def _apply_env(config: dict, environ: Mapping[str, str]) -> dict:
    out = copy.deepcopy(config)
    for env_name in sorted(environ):
        if not env_name.startswith(ENV_PREFIX):
            continue
        dotted = env_name[len(ENV_PREFIX):].lower()
        try:
            raw = yaml.safe_load(environ[env_name])
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {env_name}: {exc}")
        node = out
        parts = dotted.split("_")
        # Greedily match underscore-joined path segments against known keys
        # (keys themselves contain underscores, e.g. blocklist_k).
        path: list[str] = []
        i = 0
        while i < len(parts):
            matched = None
            for j in range(len(parts), i, -1):
                candidate = "_".join(parts[i:j])
                if isinstance(node, dict) and candidate in node:
                    matched = (candidate, j)
                    break
            if matched is None:
                raise ConfigError(f"{env_name}: no config key matches '{dotted}'")
            key, i = matched
            path.append(key)
            if i < len(parts):
                node = node[key]
                if not isinstance(node, dict):
                    raise ConfigError(f"{env_name}: '{'.'.join(path)}' is not a section")
            else:
                if isinstance(node[key], dict):
                    raise ConfigError(f"{env_name}: '{'.'.join(path)}' is a section, not a key")
                node[key] = _coerce(_default_at(path), raw, ".".join(path))
    return out


def _default_at(path: list[str]) -> Any:
    node: Any = DEFAULTS
    for key in path:
        node = node[key]
    return node


class PipelineConfig:
    """Resolved configuration with typed accessors for the pipeline stages."""

    def __init__(self, data: dict[str, Any]):
        self.data = data

    @classmethod
    def load(
        cls,
        path: str | Path | None = None,
        environ: Optional[Mapping[str, str]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "PipelineConfig":
        """Defaults, then the YAML file, then HARMONIZER_* environment keys,
        then hard overrides (CLI flags)."""
        resolved = copy.deepcopy(DEFAULTS)
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}")
            if loaded is None:
                loaded = {}
            if not isinstance(loaded, Mapping):
                raise ConfigError(f"{path}: top level must be a mapping")
            resolved = _merge(resolved, loaded, "")
        resolved = _apply_env(resolved, environ if environ is not None else os.environ)
        if overrides:
            resolved = _merge(resolved, overrides, "")
        return cls(resolved)

    def __getitem__(self, section: str) -> Any:
        return self.data[section]

    def resolved(self) -> dict[str, Any]:
        return copy.deepcopy(self.data)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    # --- typed builders ---

    def weight_vector(self) -> WeightVector:
        w = self.data["match"]["weights"]
        return WeightVector(
            token=w["token"],
            first_token=w["first_token"],
            url_text=w["url_text"],
            domain=w["domain"],
            cos=w["cos"],
        )

    def filter_params(self) -> FilterParams:
        g = self.data["graph"]
        return FilterParams(
            threshold=g["threshold"],
            resolution=g["resolution"],
            bridgeness_threshold=g["bridgeness_threshold"],
            location_boost=g["location_boost"],
            seed=self.data["run"]["seed"],
            naming=g["naming"],
            prune_rule=g["prune_rule"],
            refine_passes=g["refine_passes"],
            refine_until_stable=g["refine_until_stable"],
        )

    def search_space(self) -> SearchSpace:
        space = self.data["tune"]["space"]
        dims = []
        for name in space:
            bounds = space[name]
            if not isinstance(bounds, list) or len(bounds) != 2:
                raise ConfigError(f"tune.space.{name} must be [lo, hi]")
            dims.append((name, float(bounds[0]), float(bounds[1])))
        return SearchSpace(dims)

    def tpe_config(self) -> TpeConfig:
        t = self.data["tune"]
        return TpeConfig(
            gamma=t["gamma"],
            n_startup=t["n_startup"],
            n_candidates=t["n_candidates"],
            seed=self.data["run"]["seed"],
        )

    def tuning_params_as_config(self, params: Mapping[str, float]) -> tuple[WeightVector, FilterParams]:
        """Interpret one search-space point as weights + filter parameters,
        falling back to the configured value for any dimension not tuned."""
        w = self.data["match"]["weights"]
        weights = WeightVector(
            token=params.get("w_token", w["token"]),
            first_token=params.get("w_first_token", w["first_token"]),
            url_text=params.get("w_url_text", w["url_text"]),
            domain=params.get("w_domain", w["domain"]),
            cos=params.get("w_cos", w["cos"]),
        )
        g = self.data["graph"]
        filter_params = FilterParams(
            threshold=params.get("threshold", g["threshold"]),
            resolution=params.get("resolution", g["resolution"]),
            bridgeness_threshold=params.get("bridgeness", g["bridgeness_threshold"]),
            location_boost=params.get("location_boost", g["location_boost"]),
            seed=self.data["run"]["seed"],
            naming=g["naming"],
            prune_rule=g["prune_rule"],
            refine_passes=g["refine_passes"],
            refine_until_stable=g["refine_until_stable"],
        )
        return weights, filter_params

    def incumbent_point(self, space: SearchSpace) -> dict[str, float]:
        """The current config expressed as a search-space point (clipped into
        bounds so it is always a legal trial)."""
        w = self.data["match"]["weights"]
        g = self.data["graph"]
        values = {
            "w_token": w["token"],
            "w_first_token": w["first_token"],
            "w_url_text": w["url_text"],
            "w_domain": w["domain"],
            "w_cos": w["cos"],
            "threshold": g["threshold"],
            "resolution": g["resolution"],
            "bridgeness": g["bridgeness_threshold"],
            "location_boost": g["location_boost"],
        }
        point = {}
        for name, lo, hi in space.dims:
            value = values.get(name, (lo + hi) / 2.0)
            point[name] = min(max(value, lo), hi)
        return point
