"""INI experiment configs, grid expansion and named presets.

A config file has an ``[experiment]`` section for top-level fields and dotted
sections ``[experiment.stream]`` / ``[experiment.model]`` for the nested
dataclasses. A grid file adds a ``[grid]`` section whose keys are dotted field
paths and whose values list alternatives separated by ``|``. Unknown sections
or keys are errors.
"""
from __future__ import annotations

import configparser
import io
import itertools
import typing
from dataclasses import fields, is_dataclass, replace
from pathlib import Path

from odics.errors import ConfigurationError
from odics.experiment import ExperimentConfig
from odics.model import ModelConfig
from odics.strategies import RATIO_SWEEP, STRATEGIES
from odics.stream import StreamConfig

SECTIONS = {"experiment": (), "experiment.stream": ("stream",), "experiment.model": ("model",)}
TUPLE_ITEMS = {"domain_order": str, "train_sizes": int, "seeds": int, "quotas": float}
NONE_WORDS = ("none", "null", "")

BUDGET_SWEEP = (1, 2, 3, 4, 6, 8, 10)
BUFFER_SWEEP = (200, 800, 1000, 1200)
DOMAIN_ORDERS = (
    ("cs", "idd", "bdd", "acdc"),
    ("acdc", "cs", "idd", "bdd"),
    ("bdd", "acdc", "cs", "idd"),
    ("idd", "bdd", "acdc", "cs"),
)
DIRECTIONAL_SEEDS = (0, 1, 2, 3, 4)

# desk-scale settings for the directional reproductions: every ordering they
# check was calibrated at this size (see scripts/directional.py)
DIRECTIONAL_TRAIN = 96
DIRECTIONAL_TEST = 48
DIRECTIONAL_LR = 0.1
DIRECTIONAL_PRETRAIN_EPOCHS = 3


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _convert(name: str, hint, raw: str):
    text = raw.strip()
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional and text.lower() in NONE_WORDS:
        return None
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    try:
        if base is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is str:
            return text
        if base is tuple or typing.get_origin(base) is tuple:
            item = TUPLE_ITEMS.get(name, str)
            return tuple(item(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigurationError(f"{name}: cannot parse {raw!r} as {getattr(base, '__name__', base)}") from None
    raise ConfigurationError(f"{name}: unsupported field type {hint}")


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _field_owner(config: ExperimentConfig, path: tuple):
    obj = config
    for part in path:
        obj = getattr(obj, part)
    return obj


def set_field(config: ExperimentConfig, dotted: str, raw: str) -> ExperimentConfig:
    """Return a copy with the field at ``dotted`` (e.g. ``stream.budget``) parsed from ``raw``."""
    parts = dotted.split(".")
    if len(parts) == 1:
        owner, name = config, parts[0]
    elif len(parts) == 2 and parts[0] in ("stream", "model"):
        owner, name = getattr(config, parts[0]), parts[1]
    else:
        raise ConfigurationError(f"unknown config key {dotted!r}")
    if name not in {f.name for f in fields(owner)} or is_dataclass(getattr(owner, name)):
        raise ConfigurationError(f"unknown config key {dotted!r}")
    updated = replace(owner, **{name: _convert(name, _hints(type(owner))[name], raw)})
    return replace(config, **{parts[0]: updated}) if len(parts) == 2 else updated


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    config = base or ExperimentConfig()
    if "experiment" in parser and "preset" in parser["experiment"]:
        config = preset(parser["experiment"]["preset"])
    for section in parser.sections():
        if section == "grid":
            continue
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        prefix = ".".join(SECTIONS[section])
        for key, raw in parser[section].items():
            if section == "experiment" and key == "preset":
                continue
            config = set_field(config, f"{prefix}.{key}" if prefix else key, raw)
    return config


def grid_axes(text: str) -> list[tuple[str, list[str]]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    if "grid" not in parser:
        return []
    return [(key, [v.strip() for v in raw.split("|")]) for key, raw in parser["grid"].items()]


def expand_grid(base: ExperimentConfig, axes, lenient: bool = False) -> list[tuple[str, ExperimentConfig]]:
    """Cartesian product of axis values applied to ``base``; cell names list the settings.

    With ``lenient`` a cell whose settings are invalid comes back as
    ``(name, ConfigurationError)`` instead of aborting the expansion.
    """
    if not axes:
        return [(base.name, base)]
    cells = []
    keys = [k for k, _ in axes]
    for combo in itertools.product(*(vals for _, vals in axes)):
        label = ",".join(f"{k.split('.')[-1]}={v.replace(',', '-').replace(' ', '')}" for k, v in zip(keys, combo))
        name = f"{base.name}[{label}]"
        try:
            cfg = base
            for key, raw in zip(keys, combo):
                cfg = set_field(cfg, key, raw)
            cells.append((name, replace(cfg, name=name)))
        except ConfigurationError as exc:
            if not lenient:
                raise
            cells.append((name, exc))
    return cells


def load_cells(path: str | Path, lenient: bool = False) -> list[tuple[str, ExperimentConfig]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return expand_grid(parse_config(text), grid_axes(text), lenient)


def to_ini(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, path in SECTIONS.items():
        owner = _field_owner(config, path)
        parser[section] = {f.name: _format(getattr(owner, f.name)) for f in fields(owner)
                           if not is_dataclass(getattr(owner, f.name))}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# presets


def _table1_base(name: str) -> ExperimentConfig:
    return ExperimentConfig(name=name, stream=StreamConfig(), model=ModelConfig(), seeds=DIRECTIONAL_SEEDS)


def directional_cells() -> list[tuple[str, ExperimentConfig]]:
    """The runs behind the directional orderings, keyed by short variant names."""
    base = ExperimentConfig(
        stream=StreamConfig(train_sizes=(DIRECTIONAL_TRAIN,) * 4, test_size=DIRECTIONAL_TEST),
        model=ModelConfig(dtype="float32"), seeds=DIRECTIONAL_SEEDS, lr=DIRECTIONAL_LR,
        pretrain_epochs=DIRECTIONAL_PRETRAIN_EPOCHS)
    mixed = replace(base.stream, mode="mixed")
    variants = {
        "nt": base,
        "er": replace(base, strategy="er"),
        "nt+SimA": replace(base, sim="SimA"),
        "nt+SimB": replace(base, sim="SimB"),
        "er+SimB": replace(base, strategy="er", sim="SimB"),
        "nt+SimB-rho10": replace(base, sim="SimB", sim_ratio=10.0),
        "nt-N8": replace(base, stream=replace(base.stream, budget=8)),
        "pretrain-nt": replace(base, pretrain_sim=True, pretrain_sim_domain="SimB"),
        "pretrain-nt+SimB": replace(base, pretrain_sim=True, sim="SimB"),
        "mixed-nt": replace(base, stream=mixed),
        "mixed-nt+SimB": replace(base, sim="SimB", stream=mixed),
    }
    return [(f"directional[{k}]", replace(cfg, name=f"directional[{k}]")) for k, cfg in variants.items()]


def preset_cells(name: str) -> list[tuple[str, ExperimentConfig]]:
    """Named experiment or sweep; single experiments come back as one cell."""
    if name == "directional":
        return directional_cells()
    base = _table1_base(name)
    if name == "table1-nt":
        return [(name, base)]
    if name == "table1-grid":
        axes = [("strategy", list(STRATEGIES)), ("sim", ["none", "SimA", "SimB"])]
    elif name == "fig2-ratio":
        base = replace(base, sim="SimB")
        axes = [("sim_ratio", [str(r) for r in RATIO_SWEEP])]
    elif name == "fig-budget":
        axes = [("sim", ["none", "SimB"]), ("stream.budget", [str(n) for n in BUDGET_SWEEP])]
    elif name == "buffer-grid":
        base = replace(base, strategy="er")
        axes = [("buffer_size", [str(m) for m in BUFFER_SWEEP])]
    elif name == "order-grid":
        axes = [("sim", ["none", "SimB"]), ("stream.domain_order", [",".join(o) for o in DOMAIN_ORDERS])]
    elif name == "lambda-grid":
        axes = [("strategy", ["ewc", "mas", "lwf"]), ("lam", ["1", "10", "50"])]
    elif name == "pretrain":
        axes = [("pretrain_sim", ["false", "true"]), ("sim", ["none", "SimB"])]
    elif name == "data-incremental":
        base = replace(base, stream=replace(base.stream, mode="mixed"))
        axes = [("sim", ["none", "SimB"])]
    else:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return expand_grid(base, axes)


PRESETS = ("table1-nt", "table1-grid", "fig2-ratio", "fig-budget", "buffer-grid", "order-grid", "lambda-grid",
           "pretrain", "data-incremental", "directional")


def preset(name: str) -> ExperimentConfig:
    cells = preset_cells(name)
    if len(cells) != 1:
        raise ConfigurationError(f"preset {name!r} is a sweep of {len(cells)} runs, not a single experiment")
    return cells[0][1]
