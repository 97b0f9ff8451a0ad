"""Accuracy-under-attack versus relative cost, for baselines and Spiking-PGD."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .attack import ATTACKS, AttackConfig, spiking_pgd
from .net import Network
from .spike import SpikeGateConfig

HEADER = ["method", "rho", "epsilon", "alpha", "T", "relative_cost_pct", "accuracy_under_attack", "mean_final_loss"]


@dataclass
class ParetoPoint:
    method: str
    rho: float
    epsilon: float
    alpha: float
    T: int
    relative_cost_pct: float
    accuracy_under_attack: float
    mean_final_loss: float

    def row(self) -> list:
        return [getattr(self, h) for h in HEADER]


def pareto_sweep(
    net: Network,
    x,
    y,
    cfg: AttackConfig,
    rho_grid,
    t_grid,
    seeds=(0,),
    baselines=("pgd", "ifgsm", "mifgsm"),
    baseline_mode: str = "prev_iteration",
    surrogate: bool = True,
) -> list[ParetoPoint]:
    """Every point is averaged over ``seeds``.

    Baselines run ``T`` full iterations for each ``T`` in ``t_grid`` at cost
    ``T / t0``; Spiking-PGD always runs ``t0`` iterations and reports its
    measured cost.
    """
    points = []
    for method in baselines:
        for T in t_grid:
            c = replace(cfg, iterations=int(T))
            runs = [ATTACKS[method](net, x, y, c, seed=s) for s in seeds]
            points.append(
                ParetoPoint(
                    method, 0.0, cfg.epsilon, cfg.alpha, int(T), c.baseline_cost_pct(),
                    float(np.mean([r.accuracy_under_attack for r in runs])),
                    float(np.mean([r.mean_final_loss for r in runs])),
                )
            )
    c = replace(cfg, iterations=cfg.t0)
    for rho in rho_grid:
        gate = SpikeGateConfig(float(rho), baseline_mode, surrogate)
        runs = [spiking_pgd(net, x, y, c, gate, seed=s) for s in seeds]
        points.append(
            ParetoPoint(
                "spiking_pgd", float(rho), cfg.epsilon, cfg.alpha, cfg.t0,
                float(np.mean([r.relative_cost_pct for r in runs])),
                float(np.mean([r.accuracy_under_attack for r in runs])),
                float(np.mean([r.mean_final_loss for r in runs])),
            )
        )
    return points


def matched_baseline(point: ParetoPoint, baseline: list[ParetoPoint], tolerance: float = 5.0) -> ParetoPoint | None:
    """Nearest-cost baseline point within ``tolerance`` percentage points.

    Equal distances resolve to the more expensive (stronger) baseline.
    """
    best = None
    for b in baseline:
        d = abs(b.relative_cost_pct - point.relative_cost_pct)
        if d > tolerance + 1e-9:
            continue
        if best is None or d < best[0] - 1e-12 or (abs(d - best[0]) <= 1e-12 and b.relative_cost_pct > best[1].relative_cost_pct):
            best = (d, b)
    return None if best is None else best[1]


def write_points(points: list[ParetoPoint], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for p in points:
            w.writerow(p.row())
