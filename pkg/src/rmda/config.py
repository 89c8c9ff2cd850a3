"""Experiment configuration.

Configs are YAML documents: a tree of mappings whose leaves are typed
scalars (int, float, str, bool, null) or lists of them. Every field is
listed in :class:`ExperimentConfig`; unknown keys are rejected so typos do
not pass silently. ``parse(serialize(cfg)) == cfg`` holds for any valid
config.

Example::

    name: synthetic-logreg
    seed: 0
    epochs: 100
    batch_size: 10
    log_interval: 1
    output: null
    model: {kind: logistic, in_dim: 50, classes: 2}
    data: {source: synthetic, n: 1000, n_val: 1000, groups: 10,
           zero_fraction: 0.5, margin: 0.5}
    augmentation: {kind: none, sigma: 0.0}
    optimizer:
      kind: rmda            # rmda | rda | proxsgd | msgd
      eta: {kind: multistep, base: 0.1, period: 25, factor: 0.1, floor: 1.0e-5}
      c: {kind: multistep, base: 0.01, period: 25, factor: 10.0, cap: 1.0}
      momentum: 0.0         # proxsgd / msgd only
      restart_epochs: [25, 50, 75]
    regularizer: {kind: group_lasso, lam: 0.01}
    grouping: {train: data, eval: null}
    init: {kind: uniform}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from .core import Schedule
from .data import AugmentationPolicy


class ConfigError(ValueError):
    pass


OPTIMIZERS = ("rmda", "rda", "proxsgd", "msgd")
REGULARIZERS = ("none", "l1", "group_lasso", "sparse_group_lasso", "group_mcp",
                "l1_group_mcp", "box")


@dataclass
class OptimizerConfig:
    kind: str = "rmda"
    eta: Schedule = field(default_factory=lambda: Schedule("constant", 0.1))
    c: Schedule | None = None
    momentum: float = 0.0
    restart_epochs: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eta": self.eta.to_dict(),
            "c": None if self.c is None else self.c.to_dict(),
            "momentum": self.momentum,
            "restart_epochs": list(self.restart_epochs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        _reject_unknown(d, cls, "optimizer")
        try:
            if "eta" in d:
                d["eta"] = Schedule.from_dict(d["eta"])
            if d.get("c") is not None:
                d["c"] = Schedule.from_dict(d["c"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad schedule: {exc}") from exc
        d["restart_epochs"] = [int(e) for e in d.get("restart_epochs") or []]
        return cls(**d)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int | None = None
    epochs: int = 1
    batch_size: int = 10
    log_interval: int = 1
    output: str | None = None
    model: dict = field(default_factory=lambda: {"kind": "logistic", "in_dim": 50, "classes": 2})
    data: dict = field(default_factory=lambda: {"source": "synthetic"})
    augmentation: dict = field(default_factory=lambda: {"kind": "none", "sigma": 0.0})
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    regularizer: dict = field(default_factory=lambda: {"kind": "none"})
    grouping: dict = field(default_factory=lambda: {"train": "column", "eval": None})
    init: dict = field(default_factory=lambda: {"kind": "uniform"})

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if isinstance(v, OptimizerConfig) else copy.deepcopy(v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a mapping")
        d = copy.deepcopy(d)
        _reject_unknown(d, cls, "config")
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig.from_dict(d["optimizer"] or {})
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.seed is None or not isinstance(self.seed, int):
            raise ConfigError("an integer seed is required")
        for name in ("epochs", "batch_size", "log_interval"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        opt = self.optimizer
        if opt.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {opt.kind!r}")
        r = opt.restart_epochs
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigError("restart epochs must be strictly increasing")
        if r and (r[0] < 1 or r[-1] >= self.epochs):
            raise ConfigError("restart epochs must lie in [1, epochs)")
        if r and opt.kind not in ("rmda", "rda"):
            raise ConfigError("restarts only apply to rmda/rda")
        if not 0.0 <= opt.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.regularizer.get("kind") not in REGULARIZERS:
            raise ConfigError(f"unknown regularizer {self.regularizer.get('kind')!r}")
        if self.data.get("source") not in ("synthetic", "idx"):
            raise ConfigError("data.source must be 'synthetic' or 'idx'")
        if self.model.get("kind") not in ("logistic", "mlp", "convnet"):
            raise ConfigError(f"unknown model kind {self.model.get('kind')!r}")
        if self.init.get("kind", "uniform") not in ("uniform", "zeros", "truth_noise"):
            raise ConfigError(f"unknown init {self.init.get('kind')!r}")
        try:
            AugmentationPolicy(**self.augmentation)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad augmentation: {exc}") from exc

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def _reject_unknown(d: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")


def serialize(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def parse(text: str) -> ExperimentConfig:
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(d)


def load(path) -> ExperimentConfig:
    """Read a config file, or a shipped preset when ``path`` names one."""
    p = Path(path)
    if not p.exists() and str(path) in list_presets():
        return load_preset(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text)


def list_presets() -> list[str]:
    root = resources.files("rmda") / "presets"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("rmda") / "presets"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise ConfigError(f"no preset named {name!r}; available: {', '.join(list_presets())}")
    return parse(f.read_text())
