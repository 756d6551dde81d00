"""Run configuration: a sectioned key=value file with strict validation.

Every training hyper-parameter defaults to the values the engine was tuned
around, so a minimal config only needs the [paths] section. Unknown sections
or keys are rejected outright to catch typos in loss-weight names.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .protocols import ProtocolConfig
from .trainer import TrainConfig

_SCHEMA = {
    "paths": {"interactions", "features", "item_list", "masked_features", "output_dir"},
    "split": {"k_core", "ratios", "strategy", "seed"},
    "train": {"learning_rate", "batch_size", "max_epochs", "patience",
              "alpha", "beta", "lambda", "tau", "gcn_layers", "k_prime",
              "embed_dim", "mlp_hidden", "optimizer", "lr_decay", "seed"},
    "eval": {"ks", "longtail_threshold", "longtail"},
    "protocol": {"protocols", "ks", "mask_ratio", "mask_seed", "mask_base"},
    "grid": None,  # free keys, but each must name a [train] key
}

_GRID_KEYS = _SCHEMA["train"]


@dataclass
class RunConfig:
    interactions: Path
    features: Path | None
    item_list: Path | None
    output_dir: Path
    masked_features: Path | None
    k_core: int
    ratios: tuple[float, float, float]
    strategy: str
    split_seed: int
    train: TrainConfig
    eval_ks: tuple[int, ...]
    longtail_threshold: float
    longtail: bool
    protocols: tuple[str, ...]
    protocol: ProtocolConfig
    mask_base: str
    grid: dict[str, list[str]] = field(default_factory=dict)
    text: str = ""


def _get(parser, section, key, default):
    if parser.has_option(section, key):
        return parser.get(section, key)
    return default


def _parse_number(text, kind, where):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot parse '{text}' as {kind.__name__}") from None


def _parse_bool(text, where):
    lowered = str(text).strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{where}: cannot parse '{text}' as a boolean")


def _parse_ks(text, where) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise ConfigError(f"{where}: expected comma-separated integers, got '{text}'") from None
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"{where}: K values must be positive")
    return ks


def load_config(path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        allowed = _SCHEMA[section]
        for key in parser.options(section):
            if allowed is None:
                if key not in _GRID_KEYS:
                    raise ConfigError(f"{path}: [grid] key '{key}' is not a train parameter")
            elif key not in allowed:
                raise ConfigError(f"{path}: unknown key '{key}' in section [{section}]")

    if not parser.has_section("paths") or not parser.has_option("paths", "interactions"):
        raise ConfigError(f"{path}: [paths] interactions is required")
    base = path.parent

    def _path(key, default=None):
        raw = _get(parser, "paths", key, default)
        if raw is None or raw == "":
            return None
        p = Path(raw)
        return p if p.is_absolute() else base / p

    interactions = _path("interactions")
    if not interactions.exists():
        raise ConfigError(f"interactions file {interactions} does not exist")
    output_dir = _path("output_dir", "out")

    split_seed = _parse_number(_get(parser, "split", "seed", "2024"), int, "[split] seed")
    train_seed = _parse_number(_get(parser, "train", "seed", "2024"), int, "[train] seed")
    if seed_override is not None:
        split_seed = seed_override
        train_seed = seed_override

    ratios_raw = _get(parser, "split", "ratios", "0.8,0.1,0.1")
    try:
        ratios = tuple(float(part) for part in str(ratios_raw).split(","))
    except ValueError:
        raise ConfigError(f"[split] ratios: cannot parse '{ratios_raw}'") from None
    if len(ratios) != 3:
        raise ConfigError(f"[split] ratios needs three fractions, got {len(ratios)}")

    weights = LossWeights(
        alpha=_parse_number(_get(parser, "train", "alpha", "0.01"), float, "[train] alpha"),
        beta=_parse_number(_get(parser, "train", "beta", "0.1"), float, "[train] beta"),
        lambda_=_parse_number(_get(parser, "train", "lambda", "0.1"), float, "[train] lambda"),
        tau=_parse_number(_get(parser, "train", "tau", "0.2"), float, "[train] tau"))
    train = TrainConfig(
        learning_rate=_parse_number(_get(parser, "train", "learning_rate", "3e-4"),
                                    float, "[train] learning_rate"),
        batch_size=_parse_number(_get(parser, "train", "batch_size", "2048"),
                                 int, "[train] batch_size"),
        max_epochs=_parse_number(_get(parser, "train", "max_epochs", "1000"),
                                 int, "[train] max_epochs"),
        patience=_parse_number(_get(parser, "train", "patience", "20"),
                               int, "[train] patience"),
        weights=weights,
        gcn_layers=_parse_number(_get(parser, "train", "gcn_layers", "2"),
                                 int, "[train] gcn_layers"),
        k_prime=_parse_number(_get(parser, "train", "k_prime", "10"),
                              int, "[train] k_prime"),
        d_e=_parse_number(_get(parser, "train", "embed_dim", "64"),
                          int, "[train] embed_dim"),
        d_h=_parse_number(_get(parser, "train", "mlp_hidden", "64"),
                          int, "[train] mlp_hidden"),
        seed=train_seed,
        optimizer=_get(parser, "train", "optimizer", "adam"),
        lr_decay=_parse_number(_get(parser, "train", "lr_decay", "1.0"),
                               float, "[train] lr_decay"))

    longtail_raw = _get(parser, "eval", "longtail_threshold", "4")
    longtail_threshold = (float("inf") if str(longtail_raw).strip() == "inf"
                          else _parse_number(longtail_raw, float, "[eval] longtail_threshold"))

    protocols_raw = _get(parser, "protocol", "protocols", "zero_shot,item_cf")
    protocols = tuple(p.strip() for p in str(protocols_raw).split(",") if p.strip())
    for p in protocols:
        if p not in ("zero_shot", "item_cf", "mask_modality"):
            raise ConfigError(f"[protocol] unknown protocol '{p}'")
    mask_base = _get(parser, "protocol", "mask_base", "zero_shot")
    if mask_base not in ("zero_shot", "item_cf"):
        raise ConfigError(f"[protocol] mask_base must be zero_shot or item_cf, got '{mask_base}'")
    protocol = ProtocolConfig(
        ks=_parse_ks(_get(parser, "protocol", "ks", "10,20,50"), "[protocol] ks"),
        mask_ratio=_parse_number(_get(parser, "protocol", "mask_ratio", "0.5"),
                                 float, "[protocol] mask_ratio"),
        mask_seed=_parse_number(_get(parser, "protocol", "mask_seed", "2024"),
                                int, "[protocol] mask_seed"))

    grid: dict[str, list[str]] = {}
    if parser.has_section("grid"):
        for key in parser.options("grid"):
            grid[key] = [part.strip() for part in parser.get("grid", key).split(",")]

    return RunConfig(
        interactions=interactions,
        features=_path("features"),
        item_list=_path("item_list"),
        output_dir=output_dir,
        masked_features=_path("masked_features"),
        k_core=_parse_number(_get(parser, "split", "k_core", "5"), int, "[split] k_core"),
        ratios=ratios,
        strategy=_get(parser, "split", "strategy", "random"),
        split_seed=split_seed,
        train=train,
        eval_ks=_parse_ks(_get(parser, "eval", "ks", "10,20,50"), "[eval] ks"),
        longtail_threshold=longtail_threshold,
        longtail=_parse_bool(_get(parser, "eval", "longtail", "false"), "[eval] longtail"),
        protocols=protocols,
        protocol=protocol,
        mask_base=mask_base,
        grid=grid,
        text=text)


def require_features(cfg: RunConfig) -> None:
    if cfg.features is None or cfg.item_list is None:
        raise ConfigError("[paths] features and item_list are required for this command")
    if not cfg.features.exists():
        raise ConfigError(f"feature file {cfg.features} does not exist")
    if not cfg.item_list.exists():
        raise ConfigError(f"item list {cfg.item_list} does not exist")
