"""Experiment configuration: YAML parsing, defaults, validation, canonical form.

An empty config file is valid and yields the full default experiment.  Every
field has a documented default; unknown keys are rejected with their path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

from .trainer import Toggles, TrainConfig

CONFIG_VERSION = "gcdlab-config-v1"

# YAML key for the TrainConfig attribute that cannot share its name with the
# Python keyword.
_KEY_TO_ATTR = {"lambda": "lam"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}

# Named toggle combinations for ablation grids.
ABLATION_VARIANTS: dict[str, Toggles] = {
    "simgcd": Toggles(ler=False, map=False, dkl=False),
    "dkl": Toggles(ler=False, map=False, dkl=True),
    "ler": Toggles(ler=True, map=False, dkl=False),
    "ler_map": Toggles(ler=True, map=True, dkl=False),
    "ler_dkl": Toggles(ler=True, map=False, dkl=True),
    "legogcd": Toggles(ler=True, map=True, dkl=True),
}

# Train fields that sweep lists may address.
SWEEPABLE = {
    "lambda", "epsilon", "alpha", "beta", "delta", "lambda_ler",
    "tau_u", "tau_c", "tau_s", "tau_t_start", "tau_t_end", "tau_t_warmup_epochs",
    "tau_o", "ema_momentum", "lr0", "momentum", "weight_decay",
    "epochs", "batch_size", "seed", "aug_strength", "aug_dropout",
    "hidden_dim", "feature_dim", "proj_dim",
}

_INT_TRAIN_FIELDS = {"tau_t_warmup_epochs", "epochs", "batch_size", "seed",
                     "hidden_dim", "feature_dim", "proj_dim"}


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""


@dataclass
class SyntheticSpec:
    n_known: int = 10
    n_novel: int = 10
    per_class: int = 60
    dim: int = 20
    separation: float = 2.2
    noise: float = 0.5
    labeled_ratio: float = 0.5
    seed: int = 0


@dataclass
class CsvSpec:
    path: str = ""


@dataclass
class ExperimentConfig:
    dataset: SyntheticSpec | CsvSpec = field(default_factory=SyntheticSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: dict[str, list] = field(default_factory=dict)
    ablation: list[str] = field(default_factory=list)
    output_dir: str = "runs"
    checkpoint_every: int = 0


def _require_mapping(node: Any, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set[str], path: str) -> None:
    unknown = set(node) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _coerce_number(value: Any, key: str, path: str, want_int: bool) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    if want_int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _parse_toggles(node: Any, path: str) -> Toggles:
    node = _require_mapping(node, path)
    _reject_unknown(node, {"ler", "map", "dkl"}, path)
    toggles = Toggles()
    for key, value in node.items():
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
        setattr(toggles, key, value)
    return toggles


def _parse_train(node: Any, path: str = "train") -> TrainConfig:
    node = _require_mapping(node, path)
    allowed = SWEEPABLE | {"toggles"}
    _reject_unknown(node, allowed, path)
    cfg = TrainConfig()
    for key, value in node.items():
        if key == "toggles":
            cfg.toggles = _parse_toggles(value, f"{path}.toggles")
            continue
        attr = _KEY_TO_ATTR.get(key, key)
        setattr(cfg, attr, _coerce_number(value, key, path, key in _INT_TRAIN_FIELDS))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def _parse_dataset(node: Any, path: str = "dataset") -> SyntheticSpec | CsvSpec:
    node = _require_mapping(node, path)
    kind = node.get("kind", "synthetic")
    if kind == "csv":
        _reject_unknown(node, {"kind", "path"}, path)
        spec = CsvSpec(path=str(node.get("path", "")))
        if not spec.path:
            raise ConfigError(f"{path}: csv datasets need a 'path'")
        return spec
    if kind != "synthetic":
        raise ConfigError(f"{path}.kind: must be 'synthetic' or 'csv', got {kind!r}")
    int_fields = {"n_known", "n_novel", "per_class", "dim", "seed"}
    float_fields = {"separation", "noise", "labeled_ratio"}
    _reject_unknown(node, int_fields | float_fields | {"kind"}, path)
    spec = SyntheticSpec()
    for key, value in node.items():
        if key == "kind":
            continue
        setattr(spec, key, _coerce_number(value, key, path, key in int_fields))
    if spec.n_known < 1 or spec.n_novel < 0 or spec.per_class < 4:
        raise ConfigError(f"{path}: need n_known >= 1, n_novel >= 0, per_class >= 4")
    if not 0.0 < spec.labeled_ratio < 1.0:
        raise ConfigError(f"{path}.labeled_ratio: must be in (0, 1)")
    if spec.separation <= 0 or spec.noise <= 0:
        raise ConfigError(f"{path}: separation and noise must be positive")
    return spec


def _parse_sweep(node: Any, train: TrainConfig, path: str = "sweep") -> dict[str, list]:
    node = _require_mapping(node, path)
    _reject_unknown(node, SWEEPABLE, path)
    sweep: dict[str, list] = {}
    for key, values in node.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{path}.{key}: expected a non-empty list")
        coerced = [_coerce_number(v, key, path, key in _INT_TRAIN_FIELDS) for v in values]
        attr = _KEY_TO_ATTR.get(key, key)
        for v in coerced:
            probe = dataclasses.replace(train)
            setattr(probe, attr, v)
            try:
                probe.validate()
            except ValueError as exc:
                raise ConfigError(f"{path}.{key}: value {v!r}: {exc}") from exc
        sweep[key] = coerced
    return sweep


def config_from_dict(raw: Any) -> ExperimentConfig:
    raw = _require_mapping(raw, "config")
    _reject_unknown(
        raw,
        {"dataset", "train", "sweep", "ablation", "output_dir", "checkpoint_every"},
        "config",
    )
    train = _parse_train(raw.get("train"))
    dataset = _parse_dataset(raw.get("dataset"))
    sweep = _parse_sweep(raw.get("sweep"), train)

    ablation = raw.get("ablation", [])
    if ablation is None:
        ablation = []
    if not isinstance(ablation, list):
        raise ConfigError("ablation: expected a list of variant names")
    for name in ablation:
        if name not in ABLATION_VARIANTS:
            raise ConfigError(
                f"ablation: unknown variant {name!r}; choose from {sorted(ABLATION_VARIANTS)}"
            )

    output_dir = raw.get("output_dir", "runs")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    checkpoint_every = raw.get("checkpoint_every", 0)
    if not isinstance(checkpoint_every, int) or isinstance(checkpoint_every, bool) or checkpoint_every < 0:
        raise ConfigError("checkpoint_every: expected an integer >= 0")

    return ExperimentConfig(dataset=dataset, train=train, sweep=sweep,
                            ablation=list(ablation), output_dir=output_dir,
                            checkpoint_every=checkpoint_every)


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return config_from_dict(raw)


def parse_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config_text(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def train_to_dict(cfg: TrainConfig) -> dict:
    out = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name == "toggles":
            out["toggles"] = {"ler": cfg.toggles.ler, "map": cfg.toggles.map,
                              "dkl": cfg.toggles.dkl}
        else:
            out[_ATTR_TO_KEY.get(f.name, f.name)] = getattr(cfg, f.name)
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.dataset, CsvSpec):
        dataset: dict = {"kind": "csv", "path": cfg.dataset.path}
    else:
        dataset = {"kind": "synthetic"}
        for f in dataclasses.fields(SyntheticSpec):
            dataset[f.name] = getattr(cfg.dataset, f.name)
    return {
        "dataset": dataset,
        "train": train_to_dict(cfg.train),
        "sweep": {k: list(v) for k, v in cfg.sweep.items()},
        "ablation": list(cfg.ablation),
        "output_dir": cfg.output_dir,
        "checkpoint_every": cfg.checkpoint_every,
    }


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML form: fixed section order, version comment header."""
    body = yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)
    return f"# {CONFIG_VERSION}\n{body}"
