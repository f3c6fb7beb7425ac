"""Experiment configuration files (TOML)."""

from __future__ import annotations

import ast
import math
import operator
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .forward_model import ArrayConfig
from .synthesis import ApsModelConfig, ChannelSimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "GridParams",
    "AlphaRule",
    "AlgorithmSpec",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "builtin_config_path",
]

SCHEMA_VERSION = 1
ALGORITHM_KINDS = ("pocs", "haugazeau", "regularized")


class ConfigError(ValueError):
    pass


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_number(text: str) -> float:
    """Evaluate arithmetic like ``"-pi/2"`` or ``"3*pi/4"``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


@dataclass(frozen=True)
class GridParams:
    lower_rad: float = -math.pi / 2
    upper_rad: float = math.pi / 2
    num_points: int = 180


@dataclass(frozen=True)
class AlphaRule:
    """``spectral_fraction``: alpha = ||C||_2 / value; ``absolute``: alpha = value."""

    kind: str = "spectral_fraction"
    value: float = 100.0
    normalize: bool = True

    def alpha(self, spectral_norm: float) -> float:
        if self.kind == "spectral_fraction":
            return spectral_norm / self.value
        return self.value


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    kind: str
    gamma: float = 5.0
    mu: float = 5e4
    relaxation: float = 1.0
    max_iterations: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    array: ArrayConfig = field(default_factory=ArrayConfig)
    grid: GridParams = field(default_factory=GridParams)
    aps_model_train: ApsModelConfig = field(default_factory=ApsModelConfig)
    aps_model_test: ApsModelConfig = field(default_factory=ApsModelConfig)
    channel_sim: ChannelSimConfig = field(default_factory=ChannelSimConfig)
    dataset_size: int = 1000
    alpha_rule: AlphaRule = field(default_factory=AlphaRule)
    algorithms: tuple = ()
    iterations: int = 500
    num_trials: int = 200
    master_seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if self.num_trials < 1:
            raise ConfigError("num_trials: must be >= 1")
        if self.dataset_size < 2:
            raise ConfigError("dataset_size: must be >= 2")
        if self.iterations < 1:
            raise ConfigError("iterations: must be >= 1")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError(f"algorithms: duplicate names in {names}")
        for i, alg in enumerate(self.algorithms):
            if alg.kind not in ALGORITHM_KINDS:
                raise ConfigError(f"algorithms[{i}].kind: unknown algorithm {alg.kind!r}, "
                                  f"expected one of {ALGORITHM_KINDS}")

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def _number(value, where):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return _eval_number(value)
        except (ValueError, SyntaxError, ZeroDivisionError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _table(data, key, where=""):
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{where}{key}: expected a table")
    return value


def _check_keys(table, allowed, where):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


def _aps_model(table, where):
    _check_keys(table, {"num_paths_choices", "angle_interval_rad", "spread_rad", "weight_normalization"}, where)
    kwargs = {}
    if "num_paths_choices" in table:
        kwargs["num_paths_choices"] = tuple(int(q) for q in table["num_paths_choices"])
    if "angle_interval_rad" in table:
        interval = table["angle_interval_rad"]
        if not isinstance(interval, list) or len(interval) != 2:
            raise ConfigError(f"{where}.angle_interval_rad: expected [low, high]")
        kwargs["angle_interval_rad"] = tuple(_number(v, f"{where}.angle_interval_rad") for v in interval)
    if "spread_rad" in table:
        kwargs["spread_rad"] = _number(table["spread_rad"], f"{where}.spread_rad")
    if "weight_normalization" in table:
        kwargs["weight_normalization"] = bool(table["weight_normalization"])
    try:
        return ApsModelConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed TOML document."""
    top = {"schema_version", "name", "num_trials", "master_seed", "dataset_size", "iterations",
           "output_dir", "array", "grid", "aps_train", "aps_test", "channel", "metric", "algorithms"}
    _check_keys(data, top, "config")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")

    arr = _table(data, "array")
    _check_keys(arr, {"num_antennas", "carrier_frequency_hz", "wave_speed_m_s", "antenna_spacing_m"}, "array")
    try:
        array = ArrayConfig(
            int(arr.get("num_antennas", 16)),
            _number(arr.get("carrier_frequency_hz", 2.11e9), "array.carrier_frequency_hz"),
            _number(arr.get("wave_speed_m_s", 3e8), "array.wave_speed_m_s"),
            _number(arr["antenna_spacing_m"], "array.antenna_spacing_m") if "antenna_spacing_m" in arr else None,
        )
    except ValueError as exc:
        raise ConfigError(f"array: {exc}") from None

    g = _table(data, "grid")
    _check_keys(g, {"lower_rad", "upper_rad", "num_points"}, "grid")
    grid = GridParams(_number(g.get("lower_rad", -math.pi / 2), "grid.lower_rad"),
                      _number(g.get("upper_rad", math.pi / 2), "grid.upper_rad"),
                      int(g.get("num_points", 180)))

    train = _aps_model(_table(data, "aps_train"), "aps_train")
    test = _aps_model(_table(data, "aps_test"), "aps_test") if "aps_test" in data else train

    ch = _table(data, "channel")
    _check_keys(ch, {"num_snapshots", "noise_variance", "symbol_model"}, "channel")
    try:
        channel = ChannelSimConfig(int(ch.get("num_snapshots", 500)),
                                   _number(ch.get("noise_variance", 0.1), "channel.noise_variance"),
                                   ch.get("symbol_model", "unit-modulus-random-phase"))
    except ValueError as exc:
        raise ConfigError(f"channel: {exc}") from None

    met = _table(data, "metric")
    _check_keys(met, {"alpha_rule", "alpha_value", "normalize"}, "metric")
    kind = met.get("alpha_rule", "spectral_fraction")
    if kind not in ("spectral_fraction", "absolute"):
        raise ConfigError(f"metric.alpha_rule: expected 'spectral_fraction' or 'absolute', got {kind!r}")
    value = _number(met.get("alpha_value", 100.0), "metric.alpha_value")
    if not value > 0:
        raise ConfigError("metric.alpha_value: must be positive")
    alpha_rule = AlphaRule(kind, value, bool(met.get("normalize", True)))

    algs = []
    raw_algs = data.get("algorithms", [])
    if not isinstance(raw_algs, list) or not raw_algs:
        raise ConfigError("algorithms: expected a non-empty array of tables")
    for i, item in enumerate(raw_algs):
        where = f"algorithms[{i}]"
        _check_keys(item, {"name", "kind", "gamma", "mu", "relaxation", "max_iterations"}, where)
        if "kind" not in item:
            raise ConfigError(f"{where}.kind: missing")
        spec = AlgorithmSpec(
            name=str(item.get("name", item["kind"])),
            kind=str(item["kind"]),
            gamma=_number(item.get("gamma", 5.0), f"{where}.gamma"),
            mu=_number(item.get("mu", 5e4), f"{where}.mu"),
            relaxation=_number(item.get("relaxation", 1.0), f"{where}.relaxation"),
            max_iterations=int(item["max_iterations"]) if "max_iterations" in item else None,
        )
        if spec.gamma <= 0:
            raise ConfigError(f"{where}.gamma: must be positive")
        if spec.mu <= 0:
            raise ConfigError(f"{where}.mu: must be positive")
        if not 0 < spec.relaxation <= 2:
            raise ConfigError(f"{where}.relaxation: must lie in (0, 2]")
        algs.append(spec)

    try:
        return ExperimentConfig(
            name=str(data.get("name", "experiment")),
            array=array,
            grid=grid,
            aps_model_train=train,
            aps_model_test=test,
            channel_sim=channel,
            dataset_size=int(data.get("dataset_size", 1000)),
            alpha_rule=alpha_rule,
            algorithms=tuple(algs),
            iterations=int(data.get("iterations", 500)),
            num_trials=int(data.get("num_trials", 200)),
            master_seed=int(data.get("master_seed", 0)),
            output_dir=str(data.get("output_dir", data.get("name", "results"))),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def builtin_config_path(name: str) -> Path | None:
    """Path of a shipped config (``fig1``, ``fig2``, ``fig3``) or ``None``."""
    stem = name[:-5] if name.endswith(".toml") else name
    candidate = resources.files("apsest") / "configs" / f"{stem}.toml"
    return Path(str(candidate)) if candidate.is_file() else None


def load_config(path) -> ExperimentConfig:
    """Load a TOML config file, or a shipped one by name.

    TOML syntax errors carry the line and column from the parser; schema
    errors name the offending field.
    """
    p = Path(path)
    if not p.exists():
        builtin = builtin_config_path(str(path))
        if builtin is None:
            raise ConfigError(f"{path}: no such config file")
        p = builtin
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None
