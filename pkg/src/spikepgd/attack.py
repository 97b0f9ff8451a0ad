"""L-infinity iterative attacks: PGD, I-FGSM, MI-FGSM and Spiking-PGD.

All attacks maximize the untargeted cross-entropy on the true label with
sign-gradient steps and project back onto the epsilon ball intersected with
the pixel box after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .net import Network, backward, cross_entropy, forward
from .spike import CostLedger, SpikeGateConfig, SpikeState, relative_cost, spiking_backward, spiking_forward
from .tensor import DTYPE, SeededRandom, uniform


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    iterations: int = 10
    random_start: bool = True
    momentum: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    t0: int = 20  # reference iteration count for baseline cost

    def __post_init__(self):
        # epsilon = 0 and alpha = 0 are allowed as degenerate probes
        if self.epsilon < 0 or self.alpha < 0:
            raise ValueError("epsilon and alpha must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.lo < self.hi:
            raise ValueError("pixel bounds need lo < hi")
        if self.momentum < 0:
            raise ValueError("momentum must be nonnegative")

    def baseline_cost_pct(self) -> float:
        return 100.0 * self.iterations / self.t0


@dataclass
class AttackResult:
    x_adv: np.ndarray
    losses: list[float]           # mean loss seen by the attack at each iteration
    fire_mask: np.ndarray         # (T, L_gated, N)
    ledger: CostLedger
    accuracy_under_attack: float
    final_losses: np.ndarray      # exact per-example loss at x_adv

    @property
    def mean_final_loss(self) -> float:
        return float(np.mean(self.final_losses))

    @property
    def relative_cost_pct(self) -> float:
        return relative_cost(self.ledger)


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "exponential"
    rho0: float = 0.1
    lam: float = 2.0
    epochs: int = 200

    def __post_init__(self):
        if self.kind not in ("constant", "exponential"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 <= self.rho0 <= 1.0:
            raise ValueError("rho0 must lie in [0, 1]")
        if self.kind == "exponential" and self.lam <= 0:
            raise ValueError("exponential schedule needs lam > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def schedule_rho(spec: ScheduleSpec, t: float) -> float:
    """Spiking threshold at epoch ``t`` in ``[0, epochs]``."""
    if t < 0 or t > spec.epochs:
        raise ValueError(f"epoch {t} outside [0, {spec.epochs}]")
    if spec.kind == "constant":
        return spec.rho0
    floor = math.exp(-spec.lam)
    # lam * t / epochs can miss lam by an ulp at t = epochs; keep the result nonnegative
    return max(0.0, spec.rho0 * (math.exp(-spec.lam * t / spec.epochs) - floor) / (1.0 - floor))


def project(x, x0, cfg: AttackConfig) -> np.ndarray:
    """Clamp to the epsilon ball around ``x0``, then to the pixel box."""
    x = np.clip(x, x0 - cfg.epsilon, x0 + cfg.epsilon)
    return np.clip(x, cfg.lo, cfg.hi)


def start_point(x, cfg: AttackConfig, rng: SeededRandom, random_start: bool) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if not random_start:
        return x.copy()
    delta = uniform(rng, -cfg.epsilon, cfg.epsilon, x.shape)
    return project(x + delta, x, cfg)


def momentum_update(g_prev, grad, mu: float) -> np.ndarray:
    """``mu * g_prev + grad / ||grad||_1`` per example; zero gradients add nothing."""
    n = grad.shape[0]
    l1 = np.abs(grad).reshape(n, -1).sum(axis=1)
    scale = np.zeros_like(l1)
    np.divide(1.0, l1, out=scale, where=l1 > 0)
    return mu * g_prev + grad * scale.reshape((n,) + (1,) * (grad.ndim - 1))


def _finish(net, x_adv, y, losses, ledger) -> AttackResult:
    logits, _ = forward(net, x_adv)
    final, _ = cross_entropy(logits, y)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    fire_mask = ledger.fired if ledger.iterations else np.zeros((0, len(ledger.mac_per_layer), len(y)), bool)
    return AttackResult(x_adv, losses, fire_mask, ledger, acc, final)


def run_attack(
    net: Network,
    x,
    y,
    cfg: AttackConfig,
    seed: int = 0,
    *,
    random_start: bool,
    momentum: float | None = None,
    gate: SpikeGateConfig | None = None,
    on_iteration: Callable | None = None,
) -> AttackResult:
    """Shared iteration loop behind every attack in this module.

    ``on_iteration(t, x_t, tape, output_grads)`` is called after each
    backward pass, before the update.
    """
    y = np.asarray(y)
    x0 = np.asarray(x, dtype=DTYPE)
    rng = SeededRandom(seed)
    x_t = start_point(x0, cfg, rng, random_start)
    n = x0.shape[0]
    state = SpikeState(net, gate, n) if gate is not None else None
    ledger = state.ledger if state is not None else CostLedger.for_network(net, n)
    all_fired = np.ones((len(net.gated_indices), n), dtype=bool)
    g_mom = np.zeros_like(x0)
    losses = []
    for t in range(1, cfg.iterations + 1):
        out_grads = [] if on_iteration is not None else None
        if state is not None:
            logits, tape, fired = spiking_forward(net, state, x_t, t)
            loss, d = cross_entropy(logits, y)
            grad = spiking_backward(net, tape, fired, d, surrogate=gate.surrogate, output_grads=out_grads)
        else:
            logits, tape = forward(net, x_t)
            loss, d = cross_entropy(logits, y)
            grad, _ = backward(net, tape, d, output_grads=out_grads)
            ledger.record(all_fired)
        losses.append(float(np.mean(loss)))
        if on_iteration is not None:
            on_iteration(t, x_t, tape, out_grads)
        if momentum is not None:
            g_mom = momentum_update(g_mom, grad, momentum)
            step = np.sign(g_mom)
        else:
            step = np.sign(grad)
        x_t = project(x_t + cfg.alpha * step, x0, cfg)
    return _finish(net, x_t, y, losses, ledger)


def pgd(net, x, y, cfg: AttackConfig, seed: int = 0) -> AttackResult:
    return run_attack(net, x, y, cfg, seed, random_start=cfg.random_start)


def ifgsm(net, x, y, cfg: AttackConfig, seed: int = 0) -> AttackResult:
    return run_attack(net, x, y, cfg, seed, random_start=False)


def mifgsm(net, x, y, cfg: AttackConfig, seed: int = 0) -> AttackResult:
    return run_attack(net, x, y, cfg, seed, random_start=False, momentum=cfg.momentum)


def spiking_pgd(net, x, y, cfg: AttackConfig, gate: SpikeGateConfig, seed: int = 0) -> AttackResult:
    return run_attack(net, x, y, cfg, seed, random_start=cfg.random_start, gate=gate)


ATTACKS = {"pgd": pgd, "ifgsm": ifgsm, "mifgsm": mifgsm}


def truncated(cfg: AttackConfig, iterations: int) -> AttackConfig:
    return replace(cfg, iterations=iterations)
