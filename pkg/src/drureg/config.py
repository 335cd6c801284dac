"""Run configuration: a strict key-value document validated before any work.

The document is JSON; unknown keys are rejected everywhere so typos fail
loudly. Execution-environment knobs (output directory, parallelism) are kept
out of the scientific config so a run manifest pins results, not paths.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .harness import METHOD_KINDS, SweepConfig
from .nn import TrainConfig
from .sampling import DEFAULT_COVARIATES, DEFAULT_TARGET_SHARES, BiasSpec, default_population_spec

DEFAULT_CONFIG = {
    "seed": 20220925,
    "population": {
        "n_population": 100_000,
        "n_targets": 5,
        "covariates": [list(pair) for pair in DEFAULT_COVARIATES],
        "base_shares": list(DEFAULT_TARGET_SHARES),
        "effect_scale": 0.2,
    },
    "bias": {
        "gamma_true": 2.0,
        "d_true": [1, -1, 1, -1, -1],
        "n_sample": 2000,
    },
    "train": {
        "max_epochs": 20,
        "patience": 3,
        "batch_size": 12,
        "learning_rate": 0.01,
        "validation_fraction": 0.1,
        "improvement_tolerance": 1e-4,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_epsilon": 1e-8,
    },
    "methods": list(METHOD_KINDS),
    "covariate_subsets": [
        ["gender", "age", "area", "education", "employment", "past_vote"],
        ["gender", "age"],
    ],
    "sweep": {
        "n_replicates": 50,
        "prev_sample_size": 20_000,
        "meta_min_cell_rows": 5,
        "hidden_width": 4,
    },
    "oracle": {
        "n_instances": 100,
        "max_points": 20,
        "gamma_low": 1.0,
        "gamma_high": 4.0,
    },
    "model": {
        "loss": "squared",
        "gamma": 1.0,
        "direction": 0,
        "pinball_p": 0.5,
        "target": 0,
        "covariates": None,
        "hidden_width": 4,
    },
}

_SCALAR_TYPES = {
    ("seed",): int,
    ("population", "n_population"): int,
    ("population", "n_targets"): int,
    ("population", "effect_scale"): (int, float),
    ("bias", "n_sample"): int,
    ("train", "max_epochs"): int,
    ("train", "patience"): int,
    ("train", "batch_size"): int,
    ("train", "learning_rate"): (int, float),
    ("train", "validation_fraction"): (int, float),
    ("train", "improvement_tolerance"): (int, float),
    ("train", "adam_beta1"): (int, float),
    ("train", "adam_beta2"): (int, float),
    ("train", "adam_epsilon"): (int, float),
    ("sweep", "n_replicates"): int,
    ("sweep", "prev_sample_size"): int,
    ("sweep", "meta_min_cell_rows"): int,
    ("sweep", "hidden_width"): int,
    ("oracle", "n_instances"): int,
    ("oracle", "max_points"): int,
    ("oracle", "gamma_low"): (int, float),
    ("oracle", "gamma_high"): (int, float),
    ("model", "loss"): str,
    ("model", "gamma"): (int, float),
    ("model", "direction"): int,
    ("model", "pinball_p"): (int, float),
    ("model", "target"): int,
    ("model", "hidden_width"): int,
}


def _merge_section(name: str, given: dict, defaults: dict) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in config section {name!r}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def validate_config(doc: dict) -> dict:
    """Merge a user document over the defaults, rejecting unknown keys and
    wrong scalar types; list-valued fields are normalized downstream."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown top-level config key(s) {sorted(unknown)}")
    resolved: dict = {}
    for key, default in DEFAULT_CONFIG.items():
        if isinstance(default, dict):
            given = doc.get(key, {})
            if not isinstance(given, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            resolved[key] = _merge_section(key, given, default)
        else:
            resolved[key] = doc.get(key, default)
    for path, types in _SCALAR_TYPES.items():
        value = resolved
        for part in path:
            value = value[part]
        if isinstance(value, bool) or not isinstance(value, types):
            raise ConfigError(f"config key {'.'.join(path)} must be {types}, got {value!r}")
    covariates = resolved["population"]["covariates"]
    if not isinstance(covariates, list) or not covariates or not all(
            isinstance(pair, (list, tuple)) and len(pair) == 2
            and isinstance(pair[0], str) and isinstance(pair[1], int)
            for pair in covariates):
        raise ConfigError("population.covariates must be a list of [name, level_count] pairs")
    shares = resolved["population"]["base_shares"]
    if not isinstance(shares, list) or not all(isinstance(s, (int, float)) for s in shares):
        raise ConfigError("population.base_shares must be a list of numbers")
    if not isinstance(resolved["methods"], list) or not resolved["methods"]:
        raise ConfigError("config key 'methods' must be a non-empty list")
    for method in resolved["methods"]:
        if method not in METHOD_KINDS:
            raise ConfigError(f"unknown method {method!r}, expected one of {METHOD_KINDS}")
    subsets = resolved["covariate_subsets"]
    if not isinstance(subsets, list) or not subsets or \
            not all(isinstance(s, list) and s for s in subsets):
        raise ConfigError("config key 'covariate_subsets' must be a list of non-empty lists")
    return resolved


def load_config(path) -> dict:
    """Load a config file; a manifest written by any command also works,
    in which case its resolved config is reused verbatim."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if isinstance(doc, dict) and "resolved_config" in doc:
        doc = doc["resolved_config"]
    return validate_config(doc)


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode("utf-8")).hexdigest()


def population_spec_from_config(resolved: dict, seed: int):
    pop = resolved["population"]
    return default_population_spec(
        n_population=pop["n_population"],
        n_targets=pop["n_targets"],
        seed=seed,
        covariate_levels=[tuple(pair) for pair in pop["covariates"]],
        base_shares=pop["base_shares"],
        effect_scale=pop["effect_scale"],
    )


def bias_spec_from_config(resolved: dict, seed: int) -> BiasSpec:
    bias = resolved["bias"]
    n_targets = resolved["population"]["n_targets"]
    gamma = bias["gamma_true"]
    gammas = [float(gamma)] * n_targets if isinstance(gamma, (int, float)) else list(gamma)
    d = bias["d_true"]
    directions = [int(d)] * n_targets if isinstance(d, int) else list(d)
    if len(gammas) != n_targets or len(directions) != n_targets:
        raise ConfigError(
            f"bias vectors must have {n_targets} entries, got {len(gammas)} and {len(directions)}")
    return BiasSpec(gamma_true=tuple(gammas), d_true=tuple(directions),
                    n_sample=bias["n_sample"], seed=seed)


def train_config_from_config(resolved: dict, seed: int = 0) -> TrainConfig:
    return TrainConfig(seed=seed, **resolved["train"])


def sweep_config_from_config(resolved: dict, jobs: int) -> SweepConfig:
    sweep = resolved["sweep"]
    return SweepConfig(
        prev_sample_size=sweep["prev_sample_size"],
        meta_min_cell_rows=sweep["meta_min_cell_rows"],
        hidden_width=sweep["hidden_width"],
        jobs=jobs,
    )
