"""PGD adversarial training, optionally with Spiking-PGD as the inner attack."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackConfig, ScheduleSpec, pgd, schedule_rho, spiking_pgd
from .data import Dataset
from .net import Network, accuracy, train_batch
from .spike import CostLedger, SpikeGateConfig, relative_cost
from .tensor import SeededRandom


@dataclass(frozen=True)
class ATConfig:
    epochs: int = 30
    attack: AttackConfig = AttackConfig(iterations=5)
    schedule: ScheduleSpec | None = None  # None trains with exact PGD
    lr: float = 0.05
    batch_size: int = 64
    eval_attack: AttackConfig = AttackConfig(iterations=10)
    baseline_mode: str = "prev_iteration"
    seed: int = 0

    def __post_init__(self):
        if self.schedule is not None and self.schedule.epochs != self.epochs:
            raise ValueError("schedule length must equal the number of epochs")


@dataclass
class EpochRecord:
    epoch: int
    rho: float
    clean_acc: float
    robust_acc: float
    precision_pct: float
    avg_precision_pct: float


@dataclass
class ATReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    params: list[list[dict]] = field(default_factory=list)

    @property
    def best_clean(self) -> float:
        return max(r.clean_acc for r in self.epochs)

    @property
    def best_robust(self) -> float:
        return max(r.robust_acc for r in self.epochs)

    @property
    def best_sum(self) -> float:
        return self.best_clean + self.best_robust

    @property
    def final_avg_precision(self) -> float:
        return self.epochs[-1].avg_precision_pct

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "rho", "clean_acc", "robust_acc", "precision_pct", "avg_precision_pct"])
            for r in self.epochs:
                w.writerow([r.epoch, r.rho, r.clean_acc, r.robust_acc, r.precision_pct, r.avg_precision_pct])


def evaluate_robust(net: Network, data: Dataset, cfg: AttackConfig, seed: int = 0, batch_size: int = 256) -> float:
    """Accuracy under exact PGD."""
    if len(data) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        res = pgd(net, data.images[sl], data.labels[sl], cfg, seed=seed + start)
        correct += round(res.accuracy_under_attack * len(data.labels[sl]))
    return correct / len(data)


def adversarial_train(net: Network, train: Dataset, test: Dataset, cfg: ATConfig, keep_params: bool = False) -> ATReport:
    """Train ``net`` in place on adversaries generated each minibatch.

    The threshold for epoch ``e`` (0-based) is ``schedule_rho(schedule, e)``.
    Evaluation always uses exact PGD.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    root = SeededRandom(cfg.seed)
    report = ATReport()
    cum_exec = cum_pot = 0
    for epoch in range(cfg.epochs):
        rho = schedule_rho(cfg.schedule, epoch) if cfg.schedule is not None else 0.0
        gate = SpikeGateConfig(rho, cfg.baseline_mode) if cfg.schedule is not None else None
        order = root.fork(epoch).permutation(len(train))
        ledger: CostLedger | None = None
        for b, start in enumerate(range(0, len(train), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x, y = train.images[idx], train.labels[idx]
            seed = int(root.fork(epoch, b).integers(0, 2**31))
            if gate is None:
                res = pgd(net, x, y, cfg.attack, seed=seed)
            else:
                res = spiking_pgd(net, x, y, cfg.attack, gate, seed=seed)
            ledger = res.ledger if ledger is None else ledger.merge(res.ledger)
            train_batch(net, res.x_adv, y, cfg.lr)
        cum_exec += ledger.executed_macs
        cum_pot += ledger.potential_macs
        clean = accuracy(net, test.images, test.labels)
        robust = evaluate_robust(net, test, cfg.eval_attack, seed=cfg.seed)
        report.epochs.append(
            EpochRecord(epoch, rho, clean, robust, relative_cost(ledger), 100.0 * cum_exec / cum_pot)
        )
        if keep_params:
            report.params.append([{k: v.copy() for k, v in layer.params().items()} for layer in net.layers])
    return report
