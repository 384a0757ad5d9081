"""Experiment configuration: YAML in, validated dataclasses out.

Unknown keys, wrong types and out-of-range values raise ``ConfigError``
pointing at the offending line. ``resolve`` fills every default so the
echoed ``config.resolved`` file reproduces a run on its own.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

DATASETS = ("synthetic", "mnist", "fashion_mnist", "cifar10")
ATTACKS = ("none", "vgae_mp", "mp", "rmp")
DEFENSES = ("observe", "krum", "multi_krum")
SCHEMES = ("iid", "label-shard")
PRESET_M = (100, 200, 300)


@dataclass
class SyntheticSection:
    classes: int = 2
    dim: int = 150
    per_class_test: int = 500
    sigma: float = 0.5


@dataclass
class AttackSection:
    kind: str = "vgae_mp"
    rmp_scale: float = 10.0
    mp_push: float = 1.0


@dataclass
class VgaeSection:
    h1: int = 32
    h2: int = 16
    lr: float = 0.01
    epochs: int = 50
    k: int | None = None
    minimize: bool = False


@dataclass
class DualSection:
    d_t_mode: str | float = "median"
    upsilon_mode: str | float = "sum"
    step: float = 0.01
    lam0: float = 0.1
    rho0: float = 0.1


@dataclass
class DefenseSection:
    mode: str = "observe"
    f: int | None = None  # None: number of attackers


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    clients: int = 5
    attackers: int = 2
    rounds: int = 30
    local_iters: int = 10
    samples_per_client: int | None = 2000  # None: equal split of the whole pool
    partition: str = "iid"
    batch_size: int = 30
    learning_rate: float = 0.001
    reg_coeff: float = 0.01
    claimed_size: int | None = None
    m: int = 100
    n_eavesdropped: int | None = None  # None: every benign upload
    seed: int = 0
    jobs: int = 1
    out_dir: str = "out"
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    attack: AttackSection = field(default_factory=AttackSection)
    vgae: VgaeSection = field(default_factory=VgaeSection)
    duals: DualSection = field(default_factory=DualSection)
    defense: DefenseSection = field(default_factory=DefenseSection)

    @property
    def effective_attackers(self) -> int:
        return 0 if self.attack.kind == "none" else self.attackers

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


SECTIONS = {
    "synthetic": SyntheticSection,
    "attack": AttackSection,
    "vgae": VgaeSection,
    "duals": DualSection,
    "defense": DefenseSection,
}

PAPER_PRESET = {
    "dataset": "mnist",
    "rounds": 100,
    "samples_per_client": None,
}


# ------------------------------------------------------------------ parsing


def _plain(node: yaml.Node, lines: dict, path: str) -> Any:
    """Convert a composed YAML node to Python, recording the line of every key."""
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = str(k_node.value)
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError(f"line {k_node.start_mark.line + 1}: duplicate key {sub!r}")
            lines[sub] = k_node.start_mark.line + 1
            out[key] = _plain(v_node, lines, sub)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, lines, path) for v in node.value]
    return yaml.safe_load(yaml.serialize(node))


def _where(lines: dict, path: str) -> str:
    return f"line {lines[path]}: " if path in lines else ""


def _coerce(value: Any, annotation: str, path: str, lines: dict) -> Any:
    ann = annotation.replace(" ", "")
    options = ann.split("|")
    if value is None:
        if "None" in options:
            return None
        raise ConfigError(f"{_where(lines, path)}{path} may not be null")
    for opt in options:
        if opt == "bool" and isinstance(value, bool):
            return value
        if opt == "int" and isinstance(value, int) and not isinstance(value, bool):
            return value
        if opt == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if opt == "str" and isinstance(value, str):
            return value
    raise ConfigError(f"{_where(lines, path)}{path} expects {annotation}, got {value!r}")


def _build(cls, raw: dict, lines: dict, prefix: str = ""):
    if not isinstance(raw, dict):
        raise ConfigError(f"{_where(lines, prefix)}{prefix or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(f"{_where(lines, path)}unknown key {path!r}")
        if not prefix and key in SECTIONS:
            kwargs[key] = _build(SECTIONS[key], value if value is not None else {}, lines, path)
        else:
            kwargs[key] = _coerce(value, str(known[key].type), path, lines)
    return cls(**kwargs)


def _check(ok: bool, lines: dict, path: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{_where(lines, path)}{path}: {msg}")


def validate(cfg: ExperimentConfig, lines: dict | None = None) -> ExperimentConfig:
    lines = lines or {}
    _check(cfg.dataset in DATASETS, lines, "dataset", f"must be one of {DATASETS}")
    _check(cfg.partition in SCHEMES, lines, "partition", f"must be one of {SCHEMES}")
    _check(cfg.attack.kind in ATTACKS, lines, "attack.kind", f"must be one of {ATTACKS}")
    _check(cfg.defense.mode in DEFENSES, lines, "defense.mode", f"must be one of {DEFENSES}")
    for name in ("clients", "rounds", "local_iters", "batch_size", "m", "jobs"):
        _check(getattr(cfg, name) >= 1, lines, name, "must be >= 1")
    _check(cfg.attackers >= 0, lines, "attackers", "must be >= 0")
    _check(cfg.samples_per_client is None or cfg.samples_per_client >= 1, lines, "samples_per_client", "must be >= 1")
    _check(cfg.claimed_size is None or cfg.claimed_size >= 1, lines, "claimed_size", "must be >= 1")
    _check(cfg.learning_rate >= 0, lines, "learning_rate", "must be >= 0")
    _check(0.0 <= cfg.reg_coeff <= 1.0, lines, "reg_coeff", "must lie in [0, 1]")
    _check(cfg.n_eavesdropped is None or 1 <= cfg.n_eavesdropped <= cfg.clients, lines,
           "n_eavesdropped", f"must lie in [1, clients={cfg.clients}]")
    s = cfg.synthetic
    _check(s.classes >= 2, lines, "synthetic.classes", "must be >= 2")
    _check(s.dim >= 1 and s.per_class_test >= 1, lines, "synthetic.dim", "dim and per_class_test must be >= 1")
    _check(s.sigma > 0, lines, "synthetic.sigma", "must be > 0")
    _check(cfg.attack.rmp_scale >= 0, lines, "attack.rmp_scale", "must be >= 0")
    _check(cfg.attack.mp_push >= 0, lines, "attack.mp_push", "must be >= 0")
    v = cfg.vgae
    _check(v.h1 >= 1 and v.h2 >= 1, lines, "vgae.h1", "hidden widths must be >= 1")
    _check(v.epochs >= 1, lines, "vgae.epochs", "must be >= 1")
    _check(v.lr > 0, lines, "vgae.lr", "must be > 0")
    _check(v.k is None or 1 <= v.k <= cfg.m, lines, "vgae.k", f"must lie in [1, m={cfg.m}]")
    d = cfg.duals
    _check(d.d_t_mode == "median" or not isinstance(d.d_t_mode, str), lines, "duals.d_t_mode",
           "must be 'median' or a number")
    _check(d.upsilon_mode == "sum" or not isinstance(d.upsilon_mode, str), lines, "duals.upsilon_mode",
           "must be 'sum' or a number")
    _check(d.step >= 0 and d.lam0 >= 0 and d.rho0 >= 0, lines, "duals.step", "step, lam0 and rho0 must be >= 0")
    _check(cfg.defense.f is None or cfg.defense.f >= 0, lines, "defense.f", "must be >= 0")
    if cfg.m not in PRESET_M:
        logger.warning("m=%d is outside the reference presets %s", cfg.m, PRESET_M)
    return cfg


def parse_config_text(text: str, preset: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    lines: dict = {}
    raw = {} if node is None else _plain(node, lines, "")
    if preset == "paper":
        raw = {**PAPER_PRESET, **raw}
    elif preset is not None:
        raise ConfigError(f"unknown preset {preset!r}")
    return validate(_build(ExperimentConfig, raw, lines), lines)


def parse_config(path, preset: str | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config_text(p.read_text(), preset)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with dotted-path overrides, e.g. ``{"attack.kind": "rmp"}``."""
    raw = cfg.to_dict()
    for dotted, value in changes.items():
        *parents, leaf = dotted.split(".")
        node = raw
        for part in parents:
            node = node[part]
        if leaf not in node:
            raise ConfigError(f"unknown key {dotted!r}")
        node[leaf] = value
    return validate(_build(ExperimentConfig, raw, {}))
