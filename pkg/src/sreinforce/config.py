"""Run configuration files.

A configuration is INI text (``key = value`` under ``[trainer]``, ``[gp]``
and ``[run]`` sections). Shipped presets live in ``sreinforce/presets``.
Overrides use dotted keys, e.g. ``trainer.e_tf=400`` or
``gp.population_size=500``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources

from .exprtree import BasisSet
from .symreg import GpConfig
from .trainer import ConfigError, TrainConfig

PRESETS = ("cartpole", "acrobot", "pointreach")

_TRAINER_KEYS = {
    "env": str,
    "e_max": int,
    "e_tf": int,
    "e_delta": int,
    "e_ts": int,
    "e_is_start": int,
    "lr": float,
    "gamma": float,
    "hidden": "ints",
    "use_sr": "bool",
    "sr_target_mode": str,
    "sym_mode": str,
    "prob_floor": float,
    "ratio_clip": "optfloat",
    "standardize_targets": "bool",
    "log_timing": "bool",
}
_GP_KEYS = {
    "population_size": int,
    "tournament_size": int,
    "p_crossover": float,
    "p_subtree_mutation": float,
    "p_hoist_mutation": float,
    "p_point_mutation": float,
    "parsimony_coefficient": float,
    "generations": int,
    "basis": "names",
    "const_range": "floats",
    "init_depth": "ints",
    "max_depth": int,
    "max_length": int,
    "warm_start": "bool",
}
_RUN_KEYS = {"seeds": int, "jobs": int}
_SECTIONS = {"trainer": _TRAINER_KEYS, "gp": _GP_KEYS, "run": _RUN_KEYS}


@dataclass
class RunOptions:
    seeds: int = 5
    jobs: int = 1


def _convert(kind, text: str):
    text = text.strip()
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "optfloat":
        return None if text.lower() in ("", "none", "off") else float(text)
    if kind == "ints":
        return tuple(int(x) for x in text.split(",") if x.strip())
    if kind == "floats":
        return tuple(float(x) for x in text.split(",") if x.strip())
    if kind == "names":
        return tuple(x.strip() for x in text.split(",") if x.strip())
    return kind(text)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("sreinforce.presets").joinpath(f"{name}.ini").read_text()


def parse_override(item: str) -> tuple[str, str, str]:
    key, sep, value = item.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    return section, name, value.strip()


def load(text: str | None = None, overrides: list[str] = ()) -> tuple[TrainConfig, RunOptions]:
    """Build a validated :class:`TrainConfig` from INI text plus overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if text:
        parser.read_string(text)
    for item in overrides:
        section, name, value = parse_override(item)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value)

    values: dict[str, dict] = {s: {} for s in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        keys = _SECTIONS[section]
        for name, raw in parser.items(section):
            if name not in keys:
                raise ConfigError(f"unknown key {section}.{name}")
            try:
                values[section][name] = _convert(keys[name], raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{name}: {exc}") from None

    gp_vals = dict(values["gp"])
    names = gp_vals.pop("basis", None)
    const_range = gp_vals.pop("const_range", (-1.0, 1.0))
    basis = BasisSet.from_names(names, const_range) if names else BasisSet(const_range=const_range)
    gp = GpConfig(basis=basis, **gp_vals)
    cfg = TrainConfig(gp=gp, **values["trainer"])
    cfg.validate()
    return cfg, RunOptions(**values["run"])


def dump(cfg: TrainConfig, run: RunOptions | None = None) -> str:
    """Serialise back to the INI format read by :func:`load`."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if v is None:
            return "none"
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    lines = ["[trainer]"]
    lines += [f"{k} = {fmt(getattr(cfg, k))}" for k in _TRAINER_KEYS]
    lines += ["", "[gp]"]
    for k in _GP_KEYS:
        if k == "basis":
            v = cfg.gp.basis.names
        elif k == "const_range":
            v = cfg.gp.basis.const_range
        else:
            v = getattr(cfg.gp, k)
        lines.append(f"{k} = {fmt(v)}")
    if run is not None:
        lines += ["", "[run]", f"seeds = {run.seeds}", f"jobs = {run.jobs}"]
    return "\n".join(lines) + "\n"
