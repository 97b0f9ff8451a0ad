"""Compute schedules as binary masks over (iteration, layer).

``delta[t, l] = 1`` means gated layer ``l`` is recomputed at iteration ``t``;
0 means its cached output is reused. A row of zeros is an idle iteration
that changes nothing, so the block mask with ``S`` leading full rows
reproduces PGD stopped after ``S`` steps exactly. The first non-idle row is
always run in full since no cache exists before it.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, pgd, project, start_point, truncated
from .net import Network, cross_entropy, forward, mlp
from .spike import SpikeGateConfig, SpikeState, spiking_backward, spiking_forward
from .tensor import DTYPE, SeededRandom

BRUTE_FORCE_LIMIT = 16


class MaskCorrectionWarning(UserWarning):
    """A mask tried to reuse layers before anything was cached."""


@dataclass
class MaskProblem:
    net: Network
    x: np.ndarray
    y: np.ndarray
    cfg: AttackConfig
    budget: int
    seed: int = 0
    surrogate: bool = True

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        self.x = np.asarray(self.x, dtype=DTYPE)
        self.y = np.asarray(self.y)

    @property
    def T(self) -> int:
        return self.cfg.iterations

    @property
    def L(self) -> int:
        return len(self.net.gated_indices)

    @property
    def costs(self) -> np.ndarray:
        """Integer ``(T, L)`` cost table: per-example MACs times batch size."""
        per_layer = np.array(self.net.layer_macs(), dtype=np.int64) * len(self.y)
        return np.tile(per_layer, (self.T, 1))

    def iteration_cost(self, t: int) -> int:
        return int(self.costs[t].sum())


def embed_coarse(S: int, T: int, L: int) -> np.ndarray:
    if not 0 <= S <= T:
        raise ValueError(f"S={S} outside [0, {T}]")
    delta = np.zeros((T, L), dtype=bool)
    delta[:S] = True
    return delta


def canonical_mask(delta) -> tuple[np.ndarray, bool]:
    """Force the first non-idle row to all ones; report whether anything changed."""
    delta = np.array(delta, dtype=bool)
    active = np.nonzero(delta.any(axis=1))[0]
    if active.size == 0:
        return delta, False
    first = active[0]
    corrected = not delta[first].all()
    delta[first] = True
    return delta, corrected


def mask_cost(problem: MaskProblem, delta) -> int:
    delta = np.asarray(delta, dtype=bool)
    return int(np.sum(problem.costs * delta))


def _check_dims(problem, delta):
    if delta.shape != (problem.T, problem.L):
        raise ValueError(f"mask shape {delta.shape}, expected {(problem.T, problem.L)}")


def _final_loss(net, x, y) -> float:
    logits, _ = forward(net, x)
    return float(np.mean(cross_entropy(logits, y)[0]))


def run_mask(problem: MaskProblem, delta) -> np.ndarray:
    """Run the attack under ``delta`` and return ``x_{T+1}``."""
    delta = np.asarray(delta, dtype=bool)
    _check_dims(problem, delta)
    delta, corrected = canonical_mask(delta)
    if corrected:
        warnings.warn("first active mask row forced to full computation", MaskCorrectionWarning, stacklevel=3)
    net, cfg, y = problem.net, problem.cfg, problem.y
    x0 = problem.x
    x_t = start_point(x0, cfg, SeededRandom(problem.seed), cfg.random_start)
    state = SpikeState(net, SpikeGateConfig(0.0, surrogate=problem.surrogate), len(y))
    executed = 0
    for row in delta:
        if not row.any():
            continue
        executed += 1
        logits, tape, fired = spiking_forward(net, state, x_t, executed, force=row)
        _, d = cross_entropy(logits, y)
        grad = spiking_backward(net, tape, fired, d, surrogate=problem.surrogate)
        x_t = project(x_t + cfg.alpha * np.sign(grad), x0, cfg)
    return x_t


def evaluate_mask(problem: MaskProblem, delta) -> float:
    """Mean cross-entropy at the final iterate of the masked attack."""
    return _final_loss(problem.net, run_mask(problem, delta), problem.y)


def truncated_loss(problem: MaskProblem, S: int) -> float:
    """Final loss of ordinary PGD run for ``S`` iterations (0 = start point)."""
    if S == 0:
        x1 = start_point(problem.x, problem.cfg, SeededRandom(problem.seed), problem.cfg.random_start)
        return _final_loss(problem.net, x1, problem.y)
    res = pgd(problem.net, problem.x, problem.y, truncated(problem.cfg, S), seed=problem.seed)
    return res.mean_final_loss


def solve_coarse(problem: MaskProblem) -> tuple[int, float]:
    """Best early-stopping point by enumeration; ties go to the smaller S."""
    best_s, best_v = 0, truncated_loss(problem, 0)
    spent = 0
    for S in range(1, problem.T + 1):
        spent += problem.iteration_cost(S - 1)
        if spent > problem.budget:
            break
        v = truncated_loss(problem, S)
        if v > best_v:
            best_s, best_v = S, v
    return best_s, best_v


def _bits(delta) -> str:
    return "".join("1" if b else "0" for b in np.asarray(delta, dtype=bool).ravel())


def _better(v, c, key, best):
    # larger value, then lower cost, then lexicographically smaller bit string
    if best is None:
        return True
    bv, bc, bkey = best
    if v != bv:
        return v > bv
    if c != bc:
        return c < bc
    return key < bkey


def solve_fine_bruteforce(problem: MaskProblem) -> tuple[np.ndarray, float]:
    T, L = problem.T, problem.L
    if T * L > BRUTE_FORCE_LIMIT:
        raise ValueError(f"T*L = {T * L} exceeds {BRUTE_FORCE_LIMIT}; use solve_fine_greedy")
    seen: dict[str, float] = {}
    best = None
    best_mask = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaskCorrectionWarning)
        for code in range(2 ** (T * L)):
            bits = format(code, f"0{T * L}b")
            raw = np.array([b == "1" for b in bits]).reshape(T, L)
            delta, _ = canonical_mask(raw)
            key = _bits(delta)
            if key in seen:
                continue
            cost = mask_cost(problem, delta)
            if cost > problem.budget:
                seen[key] = None
                continue
            v = evaluate_mask(problem, delta)
            seen[key] = v
            if _better(v, cost, key, best):
                best, best_mask = (v, cost, key), delta
    return best_mask, best[0]


def solve_fine_greedy(problem: MaskProblem, swaps: bool = True) -> tuple[np.ndarray, float]:
    """Hill-climb from the best coarse schedule over single flips and swaps.

    Starting at the coarse optimum makes the result at least as good as
    :func:`solve_coarse`.
    """
    T, L = problem.T, problem.L
    s_star, _ = solve_coarse(problem)
    current, _ = canonical_mask(embed_coarse(s_star, T, L))
    cache: dict[str, float] = {}

    def value(delta):
        key = _bits(delta)
        if key not in cache:
            cache[key] = evaluate_mask(problem, delta)
        return cache[key]

    cur_v = value(current)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaskCorrectionWarning)
        while True:
            best = None
            best_mask = None
            ones = list(zip(*np.nonzero(current)))
            zeros = list(zip(*np.nonzero(~current)))
            moves = [((), (z,)) for z in zeros]
            if swaps:
                moves += [((o,), (z,)) for o in ones for z in zeros]
            for off, on in moves:
                cand = current.copy()
                for idx in off:
                    cand[idx] = False
                for idx in on:
                    cand[idx] = True
                cand, _ = canonical_mask(cand)
                cost = mask_cost(problem, cand)
                if cost > problem.budget or np.array_equal(cand, current):
                    continue
                v = value(cand)
                if v > cur_v and _better(v, cost, _bits(cand), best):
                    best, best_mask = (v, cost, _bits(cand)), cand
            if best is None:
                return current, cur_v
            current, cur_v = best_mask, best[0]


def dump_result(problem: MaskProblem, delta, value: float, path):
    out = {
        "T": problem.T,
        "L": problem.L,
        "costs": problem.costs.tolist(),
        "budget": int(problem.budget),
        "mask": _bits(delta),
        "value": value,
    }
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)


def load_result(path) -> dict:
    with open(path) as fh:
        out = json.load(fh)
    bits = np.array([c == "1" for c in out["mask"]], dtype=bool)
    out["mask"] = bits.reshape(out["T"], out["L"])
    return out


def random_tiny_problem(seed: int, T: int = 3, L: int = 2, n: int = 4, features: int = 6, classes: int = 3) -> MaskProblem:
    """A small MLP instance with a budget drawn uniformly from [0, total cost]."""
    rng = SeededRandom(seed)
    sizes = [features] + [int(rng.integers(3, 7)) for _ in range(L - 1)] + [classes]
    net = mlp(sizes, rng=rng.fork(0))
    x = rng.uniform(0.0, 1.0, (n, features))
    y = rng.integers(0, classes, n)
    cfg = AttackConfig(epsilon=0.3, alpha=0.1, iterations=T, random_start=bool(rng.integers(0, 2)))
    costs = np.array(net.layer_macs()) * n
    budget = int(rng.integers(0, T * int(costs.sum()) + 1))
    return MaskProblem(net, x, y, cfg, budget, seed=seed)
