"""Run configuration: versioned JSON schema with strict key checking."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Any

from .aligners import AlignerConfig, MODEL_KINDS
from .orchestrator import BASELINE_STRATEGIES, CycleConfig
from .synth import SynthSpec

SCHEMA_VERSION = 1
STRATEGIES = ("cycle_teaching",) + BASELINE_STRATEGIES


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


def derive_seed(seed: int, label: str) -> int:
    """Deterministic per-component seed fan-out from one top-level seed."""
    return (seed * 1_000_003 + zlib.crc32(label.encode())) % (2 ** 63)


def _require_keys(obj: dict, allowed: dict[str, type | tuple], context: str,
                  required: tuple[str, ...] = ()) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{context}: unknown key {key!r}")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{context}: missing required key {key!r}")
    for key, expected in allowed.items():
        if key in obj and not isinstance(obj[key], expected):
            raise ConfigError(f"{context}.{key}: expected {expected}, "
                              f"got {type(obj[key]).__name__}")


@dataclass
class RunConfig:
    seed: int
    strategy: str
    output_dir: str
    synth_spec: SynthSpec | None
    dataset_paths: dict | None
    train_ratio: float
    valid_ratio: float
    cycle: CycleConfig
    rank_against_all: bool
    ks: tuple[int, ...]


def parse_run_config(raw: dict, output_dir: str | None = None,
                     seed_override: int | None = None) -> RunConfig:
    _require_keys(raw, {
        "version": int, "seed": int, "strategy": str, "output_dir": str,
        "dataset": dict, "aligners": list, "cycle": dict, "eval": dict,
    }, "config", required=("version", "strategy", "dataset", "aligners"))
    if raw["version"] != SCHEMA_VERSION:
        raise ConfigError(f"config.version: expected {SCHEMA_VERSION}, got {raw['version']}")
    seed = seed_override if seed_override is not None else raw.get("seed", 0)
    strategy = raw["strategy"]
    if strategy not in STRATEGIES:
        raise ConfigError(f"config.strategy: must be one of {STRATEGIES}")
    out = output_dir or raw.get("output_dir")
    if not out:
        raise ConfigError("config.output_dir: required (or pass --out)")

    dataset = raw["dataset"]
    _require_keys(dataset, {"synth": dict, "paths": dict,
                            "train_ratio": (int, float), "valid_ratio": (int, float)},
                  "config.dataset")
    if ("synth" in dataset) == ("paths" in dataset):
        raise ConfigError("config.dataset: exactly one of 'synth' or 'paths' required")
    train_ratio = float(dataset.get("train_ratio", 0.2))
    valid_ratio = float(dataset.get("valid_ratio", 0.1))

    synth_spec = None
    dataset_paths = None
    if "synth" in dataset:
        s = dataset["synth"]
        _require_keys(s, {"n_entities": int, "n_relations": int,
                          "avg_degree": (int, float), "overlap_ratio": (int, float),
                          "structure_noise": (int, float), "rng_seed": int},
                      "config.dataset.synth", required=("n_entities", "n_relations", "avg_degree"))
        try:
            synth_spec = SynthSpec(
                n_entities=s["n_entities"], n_relations=s["n_relations"],
                avg_degree=float(s["avg_degree"]),
                overlap_ratio=float(s.get("overlap_ratio", 1.0)),
                structure_noise=float(s.get("structure_noise", 0.0)),
                rng_seed=s.get("rng_seed", derive_seed(seed, "synth")))
        except ValueError as exc:
            raise ConfigError(f"config.dataset.synth: {exc}") from exc
    else:
        p = dataset["paths"]
        _require_keys(p, {"kg1": str, "kg2": str, "links_dir": str,
                          "train_file": str, "valid_file": str, "test_file": str},
                      "config.dataset.paths", required=("kg1", "kg2", "links_dir"))
        dataset_paths = {
            "kg1": p["kg1"], "kg2": p["kg2"], "links_dir": p["links_dir"],
            "files": (p.get("train_file", "train_links"),
                      p.get("valid_file", "valid_links"),
                      p.get("test_file", "test_links")),
        }

    aligner_configs = []
    for i, a in enumerate(raw["aligners"]):
        if not isinstance(a, dict):
            raise ConfigError(f"config.aligners[{i}]: expected an object")
        _require_keys(a, {"model_kind": str, "dim": int, "learning_rate": (int, float),
                          "margin": (int, float), "negatives_per_positive": int,
                          "base_epochs": int, "semi_epochs": int, "rng_seed": int},
                      f"config.aligners[{i}]", required=("model_kind",))
        if a["model_kind"] not in MODEL_KINDS:
            raise ConfigError(f"config.aligners[{i}].model_kind: must be one of {MODEL_KINDS}")
        kwargs = dict(a)
        kwargs.setdefault("rng_seed", derive_seed(seed, f"aligner{i}"))
        for field in ("learning_rate", "margin"):
            if field in kwargs:
                kwargs[field] = float(kwargs[field])
        try:
            aligner_configs.append(AlignerConfig(**kwargs))
        except ValueError as exc:
            raise ConfigError(f"config.aligners[{i}]: {exc}") from exc

    c = raw.get("cycle", {})
    _require_keys(c, {"epsilon": (int, float), "max_iterations": int,
                      "min_new_pairs": int, "top_n": int,
                      "sim_threshold": (int, float), "use_diversity": bool,
                      "use_conflict_resolution": bool, "mu_count_pair_once": bool,
                      "patience": int}, "config.cycle")
    try:
        cycle = CycleConfig(
            aligner_configs=aligner_configs,
            epsilon=float(c.get("epsilon", 0.2)),
            max_iterations=c.get("max_iterations", 10),
            min_new_pairs=c.get("min_new_pairs", 5),
            top_n=c.get("top_n", 10),
            sim_threshold=float(c.get("sim_threshold", 0.5)),
            rng_seed=derive_seed(seed, "cycle"),
            use_diversity=c.get("use_diversity", True),
            use_conflict_resolution=c.get("use_conflict_resolution", True),
            mu_count_pair_once=c.get("mu_count_pair_once", False),
            patience=c.get("patience", 2))
    except ValueError as exc:
        raise ConfigError(f"config.cycle: {exc}") from exc

    e = raw.get("eval", {})
    _require_keys(e, {"rank_against_all": bool, "ks": list}, "config.eval")
    ks = tuple(e.get("ks", [1, 5]))
    if not all(isinstance(k, int) and k >= 1 for k in ks):
        raise ConfigError("config.eval.ks: must be positive integers")

    return RunConfig(seed=seed, strategy=strategy, output_dir=out,
                     synth_spec=synth_spec, dataset_paths=dataset_paths,
                     train_ratio=train_ratio, valid_ratio=valid_ratio,
                     cycle=cycle, rank_against_all=e.get("rank_against_all", False),
                     ks=ks)


def load_run_config(path: str, output_dir: str | None = None,
                    seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level value must be an object")
    return parse_run_config(raw, output_dir, seed_override)
