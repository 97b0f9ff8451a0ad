"""How much activations and gradients move between consecutive PGD steps."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, run_attack
from .net import Network
from .tensor import batch_relative_change

METRICS = ("activation", "gradient")


@dataclass
class RedundancyTrace:
    """Row ``r`` holds the change from iteration ``r + 1`` to ``r + 2``."""

    activation_change: np.ndarray  # (T - 1, L)
    gradient_change: np.ndarray    # (T - 1, L)
    layer_labels: list[str]
    model_tag: str = "normal"

    def layer_mean(self, metric: str = "activation") -> np.ndarray:
        return self.matrix(metric).mean(axis=1)

    def matrix(self, metric: str) -> np.ndarray:
        if metric == "activation":
            return self.activation_change
        if metric == "gradient":
            return self.gradient_change
        raise KeyError(metric)

    def tercile_means(self, metric: str = "activation") -> tuple[float, float]:
        """Layer-mean change averaged over the first and the last third of rows."""
        m = self.layer_mean(metric)
        k = max(1, len(m) // 3)
        return float(m[:k].mean()), float(m[-k:].mean())


def trace_redundancy(net: Network, x, y, cfg: AttackConfig, seed: int = 0, model_tag: str = "normal") -> RedundancyTrace:
    """Record per-layer relative changes along an exact PGD run.

    Activations are taken at the inputs of gated layers, gradients at their
    outputs. Per-example ratios are averaged over the batch.
    """
    if cfg.iterations < 2:
        raise ValueError("need at least two iterations to measure change")
    gated = net.gated_indices
    acts: list[list[np.ndarray]] = []
    grads: list[list[np.ndarray]] = []

    def record(t, x_t, tape, out_grads):
        acts.append([tape.inputs[i].copy() for i in gated])
        grads.append([out_grads[i].copy() for i in gated])

    run_attack(net, x, y, cfg, seed, random_start=cfg.random_start, on_iteration=record)
    T, L = cfg.iterations, len(gated)
    act = np.zeros((T - 1, L))
    grad = np.zeros((T - 1, L))
    for r in range(T - 1):
        for l in range(L):
            act[r, l] = batch_relative_change(acts[r + 1][l], acts[r][l]).mean()
            grad[r, l] = batch_relative_change(grads[r + 1][l], grads[r][l]).mean()
    labels = [f"{net.layers[i].kind}{k + 1}" for k, i in enumerate(gated)]
    return RedundancyTrace(act, grad, labels, model_tag)


def export_trace(trace: RedundancyTrace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "iteration", "layer", "value"])
        for metric in METRICS:
            m = trace.matrix(metric)
            for r, l in np.ndindex(*m.shape):
                w.writerow([metric, r + 1, l + 1, format(m[r, l], ".17g")])


def export_trace_wide(trace: RedundancyTrace, path, metric: str = "activation"):
    """Iterations as rows, layers as columns; ready for a heat map."""
    m = trace.matrix(metric)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + trace.layer_labels)
        for r in range(m.shape[0]):
            w.writerow([r + 1] + [format(v, ".17g") for v in m[r]])


def load_trace(path, layer_labels=None, model_tag: str = "normal") -> RedundancyTrace:
    rows = {metric: {} for metric in METRICS}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows[rec["metric"]][(int(rec["iteration"]), int(rec["layer"]))] = float(rec["value"])
    mats = []
    for metric in METRICS:
        cells = rows[metric]
        T1 = max(r for r, _ in cells)
        L = max(l for _, l in cells)
        m = np.zeros((T1, L))
        for (r, l), v in cells.items():
            m[r - 1, l - 1] = v
        mats.append(m)
    labels = layer_labels or [f"layer{l + 1}" for l in range(mats[0].shape[1])]
    return RedundancyTrace(mats[0], mats[1], labels, model_tag)
