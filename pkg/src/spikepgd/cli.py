"""Command line entry point: ``spikepgd <task> --config FILE [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .advtrain import ATConfig, adversarial_train
from .attack import ATTACKS, AttackConfig, ScheduleSpec, spiking_pgd
from .config import TASKS, ConfigError, ExperimentConfig, load_config
from .data import Dataset, load_cifar10, synth_dataset
from .maskopt import dump_result, random_tiny_problem, solve_coarse, solve_fine_bruteforce, solve_fine_greedy
from .net import accuracy, desk_cnn, load_network, save_network, sgd_epoch
from .pareto import pareto_sweep, write_points
from .profile import export_trace, export_trace_wide, trace_redundancy
from .spike import SpikeGateConfig
from .tensor import SeededRandom

log = logging.getLogger("spikepgd")


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "cifar10":
        return load_cifar10(cfg.cifar_train), load_cifar10(cfg.cifar_test)
    shape = (cfg.channels, cfg.image_size, cfg.image_size)
    kw = dict(classes=cfg.classes, image_shape=shape, noise=cfg.noise, contrast=cfg.contrast)
    return (
        synth_dataset(cfg.seed, cfg.n_train, split="train", **kw),
        synth_dataset(cfg.seed, cfg.n_test, split="test", **kw),
    )


def train_model(cfg: ExperimentConfig, train: Dataset, test: Dataset, history: list | None = None):
    rng = SeededRandom(cfg.seed)
    net = desk_cnn(train.images.shape[1:], train.class_count, cfg.width, rng=rng.fork(0))
    for epoch in range(cfg.train_epochs):
        loss = sgd_epoch(net, train, cfg.lr, rng.fork(1, epoch), cfg.batch_size)
        acc = accuracy(net, test.images, test.labels)
        log.info("epoch %d loss %.4f clean acc %.3f", epoch, loss, acc)
        if history is not None:
            history.append((epoch, loss, acc))
    return net


def get_model(cfg, train, test):
    if cfg.checkpoint:
        return load_network(cfg.checkpoint)
    return train_model(cfg, train, test)


def attack_config(cfg: ExperimentConfig, iterations: int | None = None) -> AttackConfig:
    return AttackConfig(
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        iterations=iterations or cfg.iterations,
        random_start=cfg.random_start,
        momentum=cfg.momentum,
        t0=cfg.t0,
    )


def gate_config(cfg: ExperimentConfig, rho: float | None = None) -> SpikeGateConfig:
    return SpikeGateConfig(cfg.rho if rho is None else rho, cfg.baseline_mode, cfg.surrogate)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# tasks; each returns the list of files it wrote


def task_train(cfg, out):
    train, test = load_data(cfg)
    history = []
    net = train_model(cfg, train, test, history)
    model = os.path.join(out, "model.npz")
    save_network(net, model)
    hist = os.path.join(out, "train.csv")
    _write_rows(hist, ["epoch", "loss", "clean_acc"], history)
    return [model, hist]


def task_attack(cfg, out):
    train, test = load_data(cfg)
    net = get_model(cfg, train, test)
    acfg = attack_config(cfg)
    x, y = test.images, test.labels
    if cfg.method == "spiking_pgd":
        res = spiking_pgd(net, x, y, acfg, gate_config(cfg), seed=cfg.seed)
        cost, rho = res.relative_cost_pct, cfg.rho
    elif cfg.method in ATTACKS:
        res = ATTACKS[cfg.method](net, x, y, acfg, seed=cfg.seed)
        cost, rho = acfg.baseline_cost_pct(), 0.0
    else:
        raise ConfigError(f"unknown attack method {cfg.method!r}")
    path = os.path.join(out, "attack.csv")
    _write_rows(
        path,
        ["method", "rho", "epsilon", "alpha", "T", "relative_cost_pct", "accuracy_under_attack", "mean_final_loss"],
        [[cfg.method, rho, acfg.epsilon, acfg.alpha, acfg.iterations, cost, res.accuracy_under_attack, res.mean_final_loss]],
    )
    ledger = os.path.join(out, "ledger.csv")
    res.ledger.write_csv(ledger)
    return [path, ledger]


def task_pareto(cfg, out):
    train, test = load_data(cfg)
    net = get_model(cfg, train, test)
    points = pareto_sweep(
        net, test.images, test.labels, attack_config(cfg), cfg.rho_grid, cfg.t_grid,
        seeds=cfg.attack_seeds, baseline_mode=cfg.baseline_mode, surrogate=cfg.surrogate,
    )
    path = os.path.join(out, "pareto.csv")
    write_points(points, path)
    return [path]


def task_redundancy(cfg, out):
    train, test = load_data(cfg)
    net = get_model(cfg, train, test)
    trace = trace_redundancy(net, test.images, test.labels, attack_config(cfg), seed=cfg.seed)
    long = os.path.join(out, "redundancy.csv")
    export_trace(trace, long)
    paths = [long]
    for metric in ("activation", "gradient"):
        p = os.path.join(out, f"redundancy_{metric}_wide.csv")
        export_trace_wide(trace, p, metric)
        paths.append(p)
    return paths


def task_maskopt(cfg, out):
    rows = []
    paths = []
    for i in range(cfg.mask_instances):
        problem = random_tiny_problem(cfg.seed * 100003 + i, T=cfg.mask_T, L=cfg.mask_L)
        s_star, v_coarse = solve_coarse(problem)
        mask, v_fine = solve_fine_bruteforce(problem)
        _, v_greedy = solve_fine_greedy(problem)
        p = os.path.join(out, f"mask_{i:03d}.json")
        dump_result(problem, mask, v_fine, p)
        paths.append(p)
        rows.append([i, problem.T, problem.L, problem.budget, s_star, v_coarse, v_fine, v_greedy])
    summary = os.path.join(out, "maskopt.csv")
    _write_rows(summary, ["instance", "T", "L", "budget", "coarse_S", "coarse_value", "fine_value", "greedy_value"], rows)
    return [summary] + paths


def task_advtrain(cfg, out):
    train, test = load_data(cfg)
    rng = SeededRandom(cfg.seed)
    net = desk_cnn(train.images.shape[1:], train.class_count, cfg.width, rng=rng.fork(0))
    schedule = None
    if cfg.schedule != "none":
        schedule = ScheduleSpec(cfg.schedule, cfg.rho0, cfg.decay, cfg.at_epochs)
    at = ATConfig(
        epochs=cfg.at_epochs,
        attack=attack_config(cfg),
        schedule=schedule,
        lr=cfg.lr,
        batch_size=cfg.at_batch_size,
        eval_attack=attack_config(cfg, cfg.eval_iterations),
        baseline_mode=cfg.baseline_mode,
        seed=cfg.seed,
    )
    report = adversarial_train(net, train, test, at)
    path = os.path.join(out, "advtrain.csv")
    report.write_csv(path)
    model = os.path.join(out, "model.npz")
    save_network(net, model)
    return [path, model]


TASK_FUNCS = {
    "train": task_train,
    "attack": task_attack,
    "pareto": task_pareto,
    "redundancy": task_redundancy,
    "maskopt": task_maskopt,
    "advtrain": task_advtrain,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run ``cfg.task`` and write its outputs plus ``manifest.json`` into ``cfg.out``."""
    if cfg.task not in TASK_FUNCS:
        raise ConfigError(f"unknown task {cfg.task!r}")
    os.makedirs(cfg.out, exist_ok=True)
    manifest = {
        "task": cfg.task,
        "seed": cfg.seed,
        "config": cfg.raw,
        "versions": {"spikepgd": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": [],
        "failures": [],
    }
    try:
        manifest["outputs"] = [os.path.basename(p) for p in TASK_FUNCS[cfg.task](cfg, cfg.out)]
    except Exception as exc:
        manifest["failures"].append(f"{type(exc).__name__}: {exc}")
        raise
    finally:
        with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spikepgd", description=__doc__)
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, task=args.task)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        run_experiment(cfg)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"spikepgd: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
