"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from fractions import Fraction

TASKS = ("train", "attack", "pareto", "redundancy", "maskopt", "advtrain")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _number(s: str) -> float:
    # allows "8/255"
    return float(Fraction(s)) if "/" in s else float(s)


def _bool(s: str) -> bool:
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _floats(s: str) -> list[float]:
    return [_number(p) for p in s.split(",") if p.strip()]


def _ints(s: str) -> list[int]:
    return [int(p) for p in s.split(",") if p.strip()]


@dataclass
class ExperimentConfig:
    task: str = "attack"
    seed: int = 0
    out: str = "out"
    # data
    dataset: str = "synthetic"
    cifar_train: str = ""
    cifar_test: str = ""
    n_train: int = 1000
    n_test: int = 200
    classes: int = 10
    image_size: int = 16
    channels: int = 3
    noise: float = 0.15
    contrast: float = 0.12
    # model
    checkpoint: str = ""
    width: int = 8
    train_epochs: int = 20
    lr: float = 0.05
    batch_size: int = 32
    # attack
    method: str = "pgd"
    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    iterations: int = 10
    random_start: bool = True
    momentum: float = 1.0
    t0: int = 20
    # spiking gate
    rho: float = 0.0
    baseline_mode: str = "prev_iteration"
    surrogate: bool = True
    # sweeps
    rho_grid: list[float] = field(default_factory=lambda: [0.0, 0.005, 0.0075, 0.01, 0.015, 0.02, 0.05])
    t_grid: list[int] = field(default_factory=lambda: list(range(1, 21)))
    attack_seeds: list[int] = field(default_factory=lambda: [0])
    # adversarial training
    schedule: str = "exponential"
    rho0: float = 0.1
    decay: float = 2.0
    at_epochs: int = 30
    at_batch_size: int = 64
    eval_iterations: int = 10
    # mask optimisation
    mask_instances: int = 20
    mask_T: int = 3
    mask_L: int = 2

    raw: dict = field(default_factory=dict, repr=False)


# annotations are strings here (postponed evaluation)
_PARSERS = {
    "int": int,
    "float": _number,
    "bool": _bool,
    "str": str,
    "list[float]": _floats,
    "list[int]": _ints,
}


def config_from_dict(values: dict[str, str], task: str | None = None) -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig) if f.name != "raw"}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        parser = _PARSERS[known[key].type]
        try:
            kwargs[key] = parser(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    cfg = ExperimentConfig(**kwargs, raw=dict(values))
    if task is not None:
        cfg.task = task
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    if cfg.task not in TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}; expected one of {', '.join(TASKS)}")
    if cfg.dataset not in ("synthetic", "cifar10"):
        raise ConfigError(f"unknown dataset {cfg.dataset!r}")
    paths = [cfg.checkpoint]
    if cfg.dataset == "cifar10":
        if not cfg.cifar_train or not cfg.cifar_test:
            raise ConfigError("cifar10 needs cifar_train and cifar_test")
        paths += [cfg.cifar_train, cfg.cifar_test]
    for p in paths:
        if p and not os.path.exists(p):
            raise ConfigError(f"path does not exist: {p}")
    if cfg.task == "pareto" and (not cfg.rho_grid or not cfg.t_grid):
        raise ConfigError("pareto needs nonempty rho_grid and t_grid")
    if not cfg.attack_seeds:
        raise ConfigError("attack_seeds must be nonempty")


def load_config(path, task: str | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(parse_config_text(fh.read()), task)
