"""Run configuration: JSON file over defaults, dotted-path flag overrides."""

from __future__ import annotations

import copy
import json

DEFAULTS = {
    "paths": {
        "output": "artifacts",
        "dataset": "artifacts/dataset",
        "planner": "artifacts/planner.ckpt",
        "skills": "artifacts/skills.ckpt",
        "model": "artifacts/model.ckpt",
        "evaluator": "artifacts/evaluator.ckpt",
        "character": "",                    # empty: built-in biped
    },
    "data": {"n_clips": 300, "split_ratio": 0.9, "seed": 11},
    "plan": {"length": 90, "sampler": "ddim", "ddim_steps": 50},
    "diffusion": {
        "steps": 1000, "beta_start": 1e-4, "beta_end": 0.02,
        "width": 128, "heads": 4, "blocks": 4, "ff_mult": 4,
        "cond_dim": 64, "lr": 2e-4, "batch": 16, "epochs": 40,
        "cond_dropout": 0.1, "seed": 21,
    },
    "skills": {
        "latent_dim": 64, "hidden": 256, "weight": 0.01, "lr": 5e-4,
        "batch": 32, "window": 16, "sigma": 0.05, "start_noise": 0.02,
        "control_hz": 30, "physics_hz": 480, "seed": 31,
        "curriculum": [[2, 100], [4, 150], [8, 300], [16, 900]],
        "long_lr": 1.5e-4,                  # used once the window reaches 8+
        "mid_lr": 3e-4,                     # window 8
        "drift_replay": 0.3,
        "lag_augment": 0.3,
    },
    "evaluator": {
        "hidden": 128, "embed_dim": 32, "temperature": 0.07,
        "steps": 2500, "batch": 32, "lr": 1e-3, "gate": 0.5, "seed": 41,
    },
    "eval": {
        "episodes": 100, "seed": 51, "repetitions": 3,
        "perturb_magnitude": 10.0, "perturb_period": 1.0,
        "waypoints": True, "perturbation": False,
    },
    "service": {"host": "127.0.0.1", "port": 8080},
}


class ConfigError(ValueError):
    pass


def _deep_merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out:
            raise ConfigError(f"unknown config key: {key}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key} must be a table")
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(cfg, dotted, raw_value):
    node = cfg
    parts = dotted.split(".")
    for key in parts[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config path: {dotted}")
        node = node[key]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config path: {dotted}")
    node[parts[-1]] = _parse_value(raw_value)


def load_config(path=None, overrides=()):
    """Defaults, then the JSON file, then dotted key=value overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = _deep_merge(cfg, json.load(fh))
        except FileNotFoundError as err:
            raise ConfigError(f"config file not found: {path}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from err
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key.path=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        apply_override(cfg, dotted, raw)
    return cfg
