"""Flat ``key = value`` configuration files.

Keys are namespaced by prefix (``model.``, ``train.``, ``degrade.``,
``eval.``); ``#`` starts a comment line.  Parsing is order-insensitive,
duplicate or unknown keys are errors, and every error names the
offending line.
"""

from __future__ import annotations

from .autograd import DropoutSpec
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    """Raised for malformed, duplicate, unknown, or missing config keys."""


_SCHEMA = {
    "model.n_blocks": int,
    "model.n_feats": int,
    "model.scale": int,
    "model.position": str,
    "model.fraction": float,
    "model.dropout_p": float,
    "model.dropout_dimension": str,
    "train.iters": int,
    "train.batch": int,
    "train.lr_patch": int,
    "train.lr0": float,
    "train.seed": int,
    "train.mode": str,
    "train.val_every": int,
    "train.corpus": str,
    "degrade.kind": str,
    "degrade.scale": int,
    "degrade.seed": int,
    "eval.kinds": str,
    "eval.seed": int,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse config text into a flat {key: typed value} dict."""
    values: dict = {}
    first_line: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}, line {ln}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}, line {ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(
                f"{source}, line {ln}: duplicate key {key!r} (first set on line {first_line[key]})"
            )
        caster = _SCHEMA[key]
        try:
            values[key] = caster(value)
        except ValueError:
            raise ConfigError(
                f"{source}, line {ln}: bad {caster.__name__} value {value!r} for {key!r}"
            ) from None
        first_line[key] = ln
    return values


def parse_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def model_config_from(values: dict) -> ModelConfig:
    """Build a ModelConfig from the model.* keys (defaults elsewhere)."""
    kwargs = {}
    for field in ("n_blocks", "n_feats", "scale", "position", "fraction"):
        key = f"model.{field}"
        if key in values:
            kwargs[field] = values[key]
    dropout = DropoutSpec(
        dimension=values.get("model.dropout_dimension", "channel"),
        p=values.get("model.dropout_p", 0.0),
    )
    try:
        return ModelConfig(dropout=dropout, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def train_config_from(values: dict) -> tuple[TrainConfig, str | None]:
    """Build a TrainConfig plus the corpus directory (train.corpus)."""
    if "train.iters" not in values:
        raise ConfigError("missing required key 'train.iters'")
    kwargs = {"iters": values["train.iters"]}
    for field in ("batch", "lr_patch", "lr0", "seed", "mode", "val_every"):
        key = f"train.{field}"
        if key in values:
            kwargs[field] = values[key]
    try:
        cfg = TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, values.get("train.corpus")
