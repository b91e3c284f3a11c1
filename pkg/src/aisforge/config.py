"""Experiment configuration: one YAML file, validated with line references.

Example::

    version: 1
    output_dir: out
    seeds: [0]
    models: [contrarian, momentum, arima_garch, lstm, buy_and_hold]
    walk_forward: {first_train: 252, test_len: 252, val_frac: 0.33, cost_rate: 0.0}
    lstm: {preset: desk, epochs: 60}
    arima_garch: {criterion: AIC, pmax: 5, qmax: 5, window: expanding}
    ensembles: {type1: true, type2: true, pairs: true, base_asset: SPX}
    assets:
      SPX: {path: data/spx.csv, frequency: daily, periods_per_year: 252, lstm_head: relu}
    frequency_pairs:
      SPX: {daily: SPX, hourly: SPX_1h}

Relative asset paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .arima_garch import RollingConfig
from .backtest import MODELS, BacktestConfig
from .data import ColumnSchema, Frequency
from .errors import ConfigError
from .lstm import LstmConfig, desk_config

SCHEMA_VERSION = 1
HEADS = ("relu", "inverted_relu", "linear")
MODEL_ALIASES = {"bh": "buy_and_hold", "b&h": "buy_and_hold", "arima": "arima_garch"}


def canonical_model(name: str) -> str:
    return MODEL_ALIASES.get(str(name).lower(), str(name))

_TOP_KEYS = {"version", "output_dir", "seeds", "models", "walk_forward", "lstm", "arima_garch",
             "ensembles", "assets", "frequency_pairs", "figures"}
_WF_KEYS = {"first_train", "test_len", "val_frac", "cost_rate"}
_LSTM_KEYS = {"preset", "units", "seq_len", "l2", "dropout", "lr", "epochs", "tau", "literal_eq9", "head",
              "standardize"}
LSTM_PRESETS = {"full": LstmConfig, "desk": desk_config}
_GARCH_KEYS = {"criterion", "pmax", "qmax", "window", "window_years", "refit_every"}
_ENS_KEYS = {"type1", "type2", "pairs", "base_asset", "method", "calendar"}
_ASSET_KEYS = {"path", "frequency", "periods_per_year", "lstm_head", "timestamp_column", "close_column",
               "first_train", "test_len", "lstm"}
_FREQ_PAIR_KEYS = {"daily", "hourly"}


@dataclass
class AssetConfig:
    asset_id: str
    path: Path
    frequency: Frequency = Frequency.DAILY
    periods_per_year: float = 252
    lstm_head: str | None = None
    schema: ColumnSchema = field(default_factory=ColumnSchema)
    first_train: int | None = None
    test_len: int | None = None
    lstm: dict = field(default_factory=dict)


@dataclass
class EnsembleFlags:
    type1: bool = True
    type2: bool = True
    pairs: bool = True
    base_asset: str | None = None
    method: str = "rebalanced"
    calendar: str = "quarterly"


@dataclass
class ExperimentConfig:
    assets: dict[str, AssetConfig]
    models: tuple[str, ...] = MODELS
    seeds: tuple[int, ...] = (0,)
    output_dir: Path = Path("out")
    walk_forward: dict = field(default_factory=dict)
    lstm: dict = field(default_factory=dict)
    arima_garch: dict = field(default_factory=dict)
    ensembles: EnsembleFlags = field(default_factory=EnsembleFlags)
    frequency_pairs: dict[str, dict[str, str]] = field(default_factory=dict)
    figures: dict[str, list[str]] = field(default_factory=dict)
    source: Path | None = None

    def backtest_config(self, asset_id: str) -> BacktestConfig:
        """Walk-forward, LSTM and ARIMA-GARCH settings merged for one asset."""
        a = self.assets[asset_id]
        wf = dict(self.walk_forward)
        if a.first_train is not None:
            wf["first_train"] = a.first_train
        if a.test_len is not None:
            wf["test_len"] = a.test_len
        lstm = {**self.lstm, **({"head": a.lstm_head} if a.lstm_head else {}), **a.lstm}
        base = LSTM_PRESETS[lstm.pop("preset", "full")]().to_dict()
        lstm_cfg = LstmConfig.from_dict({**base, **lstm})
        garch = RollingConfig(**{**self.arima_garch, "first_oos": wf.get("first_train", 252)})
        return BacktestConfig(periods_per_year=a.periods_per_year, lstm=lstm_cfg, garch=garch, **wf)

    def with_overrides(self, out=None, seed=None, models=None, assets=None) -> "ExperimentConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, output_dir=Path(out))
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if models:
            models = [canonical_model(m) for m in models]
            bad = [m for m in models if m not in MODELS]
            if bad:
                raise ConfigError(f"unknown models {bad}; expected a subset of {list(MODELS)}")
            cfg = replace(cfg, models=tuple(models))
        if assets:
            bad = [a for a in assets if a not in cfg.assets]
            if bad:
                raise ConfigError(f"unknown assets {bad}; config defines {sorted(cfg.assets)}")
            cfg = replace(cfg, assets={a: cfg.assets[a] for a in assets})
        return cfg


# YAML with line numbers -----------------------------------------------------

class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-6`` style floats as numbers."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)

class _Lines(dict):
    """Maps key paths (tuples) to 1-based source lines."""

    def at(self, *path) -> int | None:
        while path:
            if path in self:
                return self[path]
            path = path[:-1]
        return self.get((), None)


def _construct(node, path, lines: _Lines, loader):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = str(loader.construct_object(k, deep=True))
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _construct(v, path + (key,), lines, loader)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), lines, loader) for i, v in enumerate(node.value)]
    return loader.construct_object(node, deep=True)


def parse_yaml(text: str) -> tuple[Any, _Lines]:
    lines = _Lines()
    try:
        node = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1) from exc
    if node is None:
        raise ConfigError("empty config", 1)
    return _construct(node, (), lines, _Loader("")), lines


# validation -----------------------------------------------------------------

class _Validator:
    def __init__(self, lines: _Lines):
        self.lines = lines

    def fail(self, msg, *path):
        raise ConfigError(msg, self.lines.at(*path))

    def mapping(self, v, *path) -> dict:
        if not isinstance(v, dict):
            self.fail(f"{_dotted(path)} must be a mapping", *path)
        return v

    def keys(self, d: dict, allowed: set, *path):
        for k in d:
            if k not in allowed:
                self.fail(f"unknown key {_dotted(path + (k,))}", *path, k)

    def integer(self, v, *path, minimum=None) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{_dotted(path)} must be an integer", *path)
        if minimum is not None and v < minimum:
            self.fail(f"{_dotted(path)} must be >= {minimum}", *path)
        return v

    def number(self, v, *path, positive=False) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{_dotted(path)} must be a number", *path)
        if positive and v <= 0:
            self.fail(f"{_dotted(path)} must be positive", *path)
        return float(v)

    def choice(self, v, options, *path):
        if v not in options:
            self.fail(f"{_dotted(path)} must be one of {list(options)}, got {v!r}", *path)
        return v


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _section(v: _Validator, raw: dict, name: str, allowed: set) -> dict:
    d = v.mapping(raw.get(name, {}) or {}, name)
    v.keys(d, allowed, name)
    return d


def _check_lstm(v: _Validator, d: dict, *path) -> dict:
    v.keys(d, _LSTM_KEYS, *path)
    out = dict(d)
    if "units" in d:
        if not isinstance(d["units"], list) or not d["units"]:
            v.fail(f"{_dotted(path + ('units',))} must be a non-empty list", *path, "units")
        for i, u in enumerate(d["units"]):
            v.integer(u, *path, "units", i, minimum=1)
    for k in ("seq_len", "epochs"):
        if k in d:
            v.integer(d[k], *path, k, minimum=1)
    for k in ("l2", "dropout", "tau"):
        if k in d:
            v.number(d[k], *path, k)
    if "lr" in d:
        v.number(d["lr"], *path, "lr", positive=True)
    if "tau" in d and d["tau"] <= 0:
        v.fail("lstm tau must be positive", *path, "tau")
    if "dropout" in d and not 0 <= d["dropout"] < 1:
        v.fail("lstm dropout must lie in [0, 1)", *path, "dropout")
    if "head" in d:
        v.choice(d["head"], HEADS, *path, "head")
    if "preset" in d:
        v.choice(d["preset"], tuple(LSTM_PRESETS), *path, "preset")
    for k in ("literal_eq9", "standardize"):
        if k in d and not isinstance(d[k], bool):
            v.fail(f"{_dotted(path + (k,))} must be true or false", *path, k)
    return out


def validate_config(raw: Any, lines: _Lines, base_dir: Path) -> ExperimentConfig:
    v = _Validator(lines)
    raw = v.mapping(raw)
    v.keys(raw, _TOP_KEYS)
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        v.fail(f"unsupported config version {version!r}; expected {SCHEMA_VERSION}", "version")

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        v.fail("seeds must be a non-empty list", "seeds")
    seeds = tuple(v.integer(s, "seeds", i, minimum=0) for i, s in enumerate(seeds))

    models = raw.get("models", list(MODELS))
    if not isinstance(models, list) or not models:
        v.fail("models must be a non-empty list", "models")
    models = [canonical_model(m) for m in models]
    for i, m in enumerate(models):
        v.choice(m, MODELS, "models", i)
    if len(set(models)) != len(models):
        v.fail("models lists a model twice", "models")

    wf = _section(v, raw, "walk_forward", _WF_KEYS)
    for k in ("first_train", "test_len"):
        if k in wf:
            v.integer(wf[k], "walk_forward", k, minimum=1)
    if "val_frac" in wf and not 0 < v.number(wf["val_frac"], "walk_forward", "val_frac") < 1:
        v.fail("walk_forward.val_frac must lie in (0, 1)", "walk_forward", "val_frac")
    if "cost_rate" in wf and v.number(wf["cost_rate"], "walk_forward", "cost_rate") < 0:
        v.fail("walk_forward.cost_rate must be >= 0", "walk_forward", "cost_rate")

    lstm = _check_lstm(v, _section(v, raw, "lstm", _LSTM_KEYS), "lstm")

    garch = _section(v, raw, "arima_garch", _GARCH_KEYS)
    if "criterion" in garch:
        v.choice(str(garch["criterion"]).upper(), ("AIC", "BIC", "HQC"), "arima_garch", "criterion")
    if "window" in garch:
        v.choice(garch["window"], ("expanding", "rolling"), "arima_garch", "window")
    for k in ("pmax", "qmax"):
        if k in garch:
            v.integer(garch[k], "arima_garch", k, minimum=0)
    if "refit_every" in garch:
        v.integer(garch["refit_every"], "arima_garch", "refit_every", minimum=1)
    if "window_years" in garch:
        v.number(garch["window_years"], "arima_garch", "window_years", positive=True)

    ens = _section(v, raw, "ensembles", _ENS_KEYS)
    for k in ("type1", "type2", "pairs"):
        if k in ens and not isinstance(ens[k], bool):
            v.fail(f"ensembles.{k} must be true or false", "ensembles", k)
    if "method" in ens:
        v.choice(ens["method"], ("rebalanced", "mean"), "ensembles", "method")
    if "calendar" in ens:
        v.choice(ens["calendar"], ("quarterly", "none"), "ensembles", "calendar")

    assets_raw = raw.get("assets")
    if not assets_raw:
        v.fail("config needs at least one asset under 'assets'", "assets")
    v.mapping(assets_raw, "assets")
    assets = {}
    for aid, a in assets_raw.items():
        a = v.mapping(a, "assets", aid)
        v.keys(a, _ASSET_KEYS, "assets", aid)
        if "path" not in a:
            v.fail(f"asset {aid}: missing 'path'", "assets", aid)
        path = Path(str(a["path"]))
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            v.fail(f"asset {aid}: data file {path} does not exist", "assets", aid, "path")
        freq = v.choice(a.get("frequency", "daily"), [f.value for f in Frequency], "assets", aid, "frequency")
        ppy = v.number(a.get("periods_per_year", 252), "assets", aid, "periods_per_year", positive=True)
        head = a.get("lstm_head")
        if head is not None:
            v.choice(head, HEADS, "assets", aid, "lstm_head")
        for k in ("first_train", "test_len"):
            if k in a:
                v.integer(a[k], "assets", aid, k, minimum=1)
        a_lstm = _check_lstm(v, v.mapping(a.get("lstm", {}) or {}, "assets", aid, "lstm"), "assets", aid, "lstm")
        schema = ColumnSchema(a.get("timestamp_column", "timestamp"), a.get("close_column", "close"))
        assets[str(aid)] = AssetConfig(str(aid), path, Frequency(freq), ppy, head, schema,
                                       a.get("first_train"), a.get("test_len"), a_lstm)

    if ens.get("base_asset") is not None and ens["base_asset"] not in assets:
        v.fail(f"ensembles.base_asset {ens['base_asset']!r} is not a configured asset", "ensembles", "base_asset")

    pairs = v.mapping(raw.get("frequency_pairs", {}) or {}, "frequency_pairs")
    for name, pair in pairs.items():
        pair = v.mapping(pair, "frequency_pairs", name)
        v.keys(pair, _FREQ_PAIR_KEYS, "frequency_pairs", name)
        for k in ("daily", "hourly"):
            if pair.get(k) not in assets:
                v.fail(f"frequency_pairs.{name}.{k} must name a configured asset", "frequency_pairs", name, k)

    figures = v.mapping(raw.get("figures", {}) or {}, "figures")
    for name, ids in figures.items():
        if not isinstance(ids, list) or not ids:
            v.fail(f"figures.{name} must be a non-empty list of run ids", "figures", name)

    cfg = ExperimentConfig(
        assets=assets,
        models=tuple(models),
        seeds=seeds,
        output_dir=Path(str(raw.get("output_dir", "out"))),
        walk_forward=dict(wf),
        lstm=lstm,
        arima_garch={**garch, **({"criterion": str(garch["criterion"]).upper()} if "criterion" in garch else {})},
        ensembles=EnsembleFlags(**ens),
        frequency_pairs={str(k): dict(p) for k, p in pairs.items()},
        figures={str(k): [str(i) for i in ids] for k, ids in figures.items()},
    )
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = base_dir / cfg.output_dir
    for aid in assets:
        try:
            cfg.backtest_config(aid)
        except (TypeError, ValueError) as exc:
            v.fail(f"asset {aid}: {exc}", "assets", aid)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    raw, lines = parse_yaml(path.read_text(encoding="utf-8"))
    cfg = validate_config(raw, lines, path.resolve().parent)
    cfg.source = path
    return cfg
