"""Run configuration: one JSON document, layered over built-in defaults.

Precedence, lowest to highest: ``DEFAULTS``, the ``--config`` file,
``--set section.key=value`` overrides, then dedicated command-line flags
(``--seed``, ``--out`` and the per-command options).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "out": "run",
    "paths": {
        # None means "derive from out": out/data/manifest.csv and so on
        "manifest": None,
        "image_root": None,
        "test_ids": None,
        "checkpoints": None,
        "predictions": None,
    },
    "synth": {
        "n_patients": 1200,
        "n_test": 200,
        "side": 128,
        "visits": 4,
        "width_ratio": 1.25,
        "drusen_mix": [0.4, 0.3, 0.3],
        "pigment_rate": 0.35,
        "late_amd_rate": 0.15,
        "left_missing_rate": 0.0,
        "n_drusen": 16,
        "n_pigment": 5,
        "noise": 0.015,
    },
    "model": {
        "side": 64,
        "strategy": "full_train",
    },
    "train": {
        "batch_size": 32,
        "max_epochs": 5,
        "lr": 1e-4,
        "patience": 1,
        "holdout_fraction": 0.1,
        "compare_strategies": False,
    },
    "pretrain": {
        "n_images": 3000,
        "max_shapes": 5,
        "batch_size": 32,
        "max_epochs": 5,
        "lr": 1e-3,
    },
    "eval": {
        "bootstrap": 2000,
        "alpha": 0.05,
        "weights": None,
    },
    "interpret": {
        "images": [],
        "n_saliency": 4,
        "heads": ["drusen", "pigment", "late_amd"],
        "tsne_split": "test",
        "tsne_max_points": 1000,
        "perplexity": 30.0,
        "iterations": 1000,
    },
}

STRATEGIES = ("fine_tune", "frozen_extractor", "full_train")

# keys whose default is None accept these types
_NULLABLE = {
    ("paths", "manifest"): str,
    ("paths", "image_root"): str,
    ("paths", "test_ids"): str,
    ("paths", "checkpoints"): str,
    ("paths", "predictions"): str,
    ("eval", "weights"): str,
}


def _merge(base: dict, extra: dict, prefix: str = ""):
    if not isinstance(extra, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a JSON object")
    for key, value in extra.items():
        name = prefix + key
        if key not in base:
            raise ConfigError(name, "unknown key")
        if isinstance(base[key], dict):
            _merge(base[key], value, name + ".")
        else:
            base[key] = value


def _check_type(name: str, path: tuple, default, value):
    if default is None:
        want = _NULLABLE[path]
        if value is not None and not isinstance(value, want):
            raise ConfigError(name, f"expected {want.__name__} or null")
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(name, f"expected {type(default).__name__}, got {value!r}")


def _walk(defaults: dict, cfg: dict, path=()):
    for key, default in defaults.items():
        here = path + (key,)
        name = ".".join(here)
        if isinstance(default, dict):
            _walk(default, cfg[key], here)
        else:
            _check_type(name, here, default, cfg[key])


def _positive(cfg, section, *keys):
    for key in keys:
        if cfg[section][key] < 1:
            raise ConfigError(f"{section}.{key}", "must be >= 1")


def validate(cfg: dict) -> dict:
    _walk(DEFAULTS, cfg)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {cfg['schema_version']}")
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if cfg["model"]["strategy"] not in STRATEGIES:
        raise ConfigError("model.strategy", f"must be one of {', '.join(STRATEGIES)}")
    _positive(cfg, "synth", "n_patients", "side", "visits")
    _positive(cfg, "model", "side")
    _positive(cfg, "train", "batch_size", "max_epochs", "patience")
    _positive(cfg, "pretrain", "n_images", "max_shapes", "batch_size", "max_epochs")
    _positive(cfg, "eval", "bootstrap")
    _positive(cfg, "interpret", "iterations", "tsne_max_points")
    if not 0 <= cfg["synth"]["n_test"] <= cfg["synth"]["n_patients"]:
        raise ConfigError("synth.n_test", "must lie in [0, synth.n_patients]")
    if len(cfg["synth"]["drusen_mix"]) != 3:
        raise ConfigError("synth.drusen_mix", "needs three weights")
    if not 0 < cfg["train"]["holdout_fraction"] < 1:
        raise ConfigError("train.holdout_fraction", "must lie in (0, 1)")
    if not 0 < cfg["eval"]["alpha"] < 1:
        raise ConfigError("eval.alpha", "must lie in (0, 1)")
    if cfg["eval"]["weights"] not in (None, "quadratic"):
        raise ConfigError("eval.weights", "must be null or 'quadratic'")
    if cfg["interpret"]["tsne_split"] not in ("test", "all"):
        raise ConfigError("interpret.tsne_split", "must be 'test' or 'all'")
    if cfg["interpret"]["perplexity"] < 2:
        raise ConfigError("interpret.perplexity", "must be >= 2")
    for head in cfg["interpret"]["heads"]:
        if head not in ("drusen", "pigment", "late_amd"):
            raise ConfigError("interpret.heads", f"unknown head {head!r}")
    return cfg


def parse_override(text: str):
    """``section.key=value`` with a JSON value (bare words are taken as strings)."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parse_override_value(key.strip(), value)


def load_config(path=None, overrides=(), flags: dict | None = None) -> dict:
    """Build and validate a config. ``flags`` maps dotted keys to values; None is skipped."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("--config", f"file not found: {path}") from None
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        _merge(cfg, doc)
    for text in overrides:
        _merge(cfg, parse_override(text))
    for dotted, value in (flags or {}).items():
        if value is not None:
            _merge(cfg, parse_override_value(dotted, value))
    return validate(cfg)


def parse_override_value(dotted: str, value) -> dict:
    node: dict = {}
    cur = node
    parts = dotted.split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return node


def resolved_paths(cfg: dict) -> dict:
    """Absolute-or-relative paths with the out-directory defaults filled in."""
    out = Path(cfg["out"])
    p = cfg["paths"]
    manifest = Path(p["manifest"]) if p["manifest"] else out / "data" / "manifest.csv"
    return {
        "out": out,
        "manifest": manifest,
        "image_root": Path(p["image_root"]) if p["image_root"] else manifest.parent,
        "test_ids": Path(p["test_ids"]) if p["test_ids"] else manifest.parent / "test_ids.txt",
        "checkpoints": Path(p["checkpoints"]) if p["checkpoints"] else out / "model",
        "predictions": (Path(p["predictions"]) if p["predictions"]
                        else out / "eval" / "predictions.csv"),
    }
