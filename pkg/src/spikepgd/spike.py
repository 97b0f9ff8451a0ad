"""Event-driven layer reuse across attack iterations.

Each gated (linear) layer keeps a cache of a reference input and its last
computed output. At iteration ``t > 1`` the layer recomputes only for the
examples whose input moved by at least ``rho`` relative to the reference;
the rest re-emit the cached output. On the way back, reused layers receive
the transpose of their linear map applied to the current upstream gradient
instead of the zero a broken graph would give.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .net import ForwardTape, Network, check_tape, transpose_apply
from .tensor import DTYPE, batch_relative_change, relative_change

BASELINE_MODES = ("prev_iteration", "last_fired")


@dataclass(frozen=True)
class SpikeGateConfig:
    rho: float = 0.0
    baseline_mode: str = "prev_iteration"
    surrogate: bool = True
    granularity: str = "per_example"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.baseline_mode not in BASELINE_MODES:
            raise ValueError(f"baseline_mode must be one of {BASELINE_MODES}")
        if self.granularity != "per_example":
            raise ValueError("only per_example gating is supported")


def gate(a_t, a_ref, rho: float) -> bool:
    """True to fire (recompute), False to reuse. Ties fire."""
    return bool(relative_change(a_t, a_ref) >= rho)


def gate_batch(a_t, a_ref, rho: float) -> np.ndarray:
    return batch_relative_change(a_t, a_ref) >= rho


@dataclass
class LayerCache:
    a_ref: np.ndarray | None = None
    out: np.ndarray | None = None

    @property
    def valid(self) -> bool:
        return self.a_ref is not None


class CostLedger:
    """Which gated forward computations ran, weighted by per-example MACs.

    Fire records are kept as blocks of ``(T, L, N)`` boolean arrays so that
    ledgers from separate attack runs merge by concatenation; totals are
    plain Python integers.
    """

    def __init__(self, mac_per_layer, n_examples: int):
        self.mac_per_layer = tuple(int(m) for m in mac_per_layer)
        self.n_examples = int(n_examples)
        self._columns: list[np.ndarray] = []
        self._blocks: list[np.ndarray] = []

    @classmethod
    def for_network(cls, net: Network, n_examples: int) -> "CostLedger":
        return cls(net.layer_macs(), n_examples)

    def record(self, fire_column: np.ndarray):
        fire_column = np.asarray(fire_column, dtype=bool)
        if fire_column.shape != (len(self.mac_per_layer), self.n_examples):
            raise ValueError(f"fire column shape {fire_column.shape} does not fit ledger")
        self._columns.append(fire_column.copy())

    @property
    def blocks(self) -> list[np.ndarray]:
        out = list(self._blocks)
        if self._columns:
            out.append(np.stack(self._columns))
        return out

    @property
    def fired(self) -> np.ndarray:
        """The ``(T, L, N)`` fire matrix of a single-run ledger."""
        blocks = self.blocks
        if len(blocks) != 1:
            raise ValueError("merged ledgers have no single fire matrix; use .blocks")
        return blocks[0]

    @property
    def iterations(self) -> int:
        return len(self._columns)

    def fire_counts(self) -> list[int]:
        counts = [0] * len(self.mac_per_layer)
        for b in self.blocks:
            for l, c in enumerate(b.sum(axis=(0, 2))):
                counts[l] += int(c)
        return counts

    @property
    def executed_macs(self) -> int:
        return sum(c * m for c, m in zip(self.fire_counts(), self.mac_per_layer))

    @property
    def potential_macs(self) -> int:
        per_pass = sum(self.mac_per_layer)
        return sum(b.shape[0] * b.shape[2] * per_pass for b in self.blocks)

    @property
    def total_macs_with_backward(self) -> int:
        """Forward MACs executed plus the unconditional backward MACs."""
        return self.executed_macs + self.potential_macs

    def merge(self, other: "CostLedger") -> "CostLedger":
        if other.mac_per_layer != self.mac_per_layer:
            raise ValueError("cannot merge ledgers of different networks")
        out = CostLedger(self.mac_per_layer, self.n_examples + other.n_examples)
        out._blocks = self.blocks + other.blocks
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "layer", "example", "fired", "layer_macs"])
            offset = 0
            for b in self.blocks:
                for t, l, i in np.ndindex(*b.shape):
                    w.writerow([t + 1, l + 1, offset + i, int(b[t, l, i]), self.mac_per_layer[l]])
                offset += b.shape[2]


def relative_cost(ledger: CostLedger) -> float:
    """Executed over potential gated forward MACs, in percent."""
    potential = ledger.potential_macs
    if potential == 0:
        raise ValueError("empty ledger")
    return 100.0 * ledger.executed_macs / potential


@dataclass
class SpikeState:
    """Per-run caches for every gated layer of one network and one batch."""

    net: Network
    config: SpikeGateConfig
    n_examples: int
    caches: list[LayerCache] = field(init=False)
    ledger: CostLedger = field(init=False)

    def __post_init__(self):
        self.caches = [LayerCache() for _ in self.net.gated_indices]
        self.ledger = CostLedger.for_network(self.net, self.n_examples)


def spiking_forward(net: Network, state: SpikeState, x_t, t: int, force: np.ndarray | None = None):
    """One gated forward pass at iteration ``t`` (1-based).

    ``force``, when given, is a boolean ``(L_gated, N)`` (or ``(L_gated,)``)
    array that overrides the gate decision per layer. Iteration 1 always fires
    because nothing is cached yet. Returns ``(logits, tape, fire_column)``.
    """
    if t < 1:
        raise ValueError("iterations are 1-based")
    cfg = state.config
    x_t = np.asarray(x_t, dtype=DTYPE)
    if x_t.shape[1:] != net.input_shape:
        raise ValueError(f"input shape {x_t.shape[1:]} does not match network input {net.input_shape}")
    n = x_t.shape[0]
    if n != state.n_examples:
        raise ValueError("batch size differs from the spike state")
    n_gated = len(state.caches)
    if force is not None:
        force = np.asarray(force, dtype=bool)
        if force.ndim == 1:
            force = np.repeat(force[:, None], n, axis=1)
        if force.shape != (n_gated, n):
            raise ValueError(f"force mask shape {force.shape}, expected {(n_gated, n)}")

    fire_column = np.ones((n_gated, n), dtype=bool)
    inputs, outputs, aux = [], [], []
    a = x_t
    g_idx = 0
    for layer in net.layers:
        if not layer.gated:
            o, extra = layer.forward(a)
        else:
            cache = state.caches[g_idx]
            if t == 1 or not cache.valid:
                if t > 1:
                    raise RuntimeError(f"gated layer {g_idx} has no cache at iteration {t}")
                fire = np.ones(n, dtype=bool)
            elif force is not None:
                fire = force[g_idx]
            else:
                fire = gate_batch(a, cache.a_ref, cfg.rho)

            if fire.all():
                o, extra = layer.forward(a)
                cache.out = o.copy()
            else:
                o = cache.out.copy()
                if fire.any():
                    o[fire] = layer.forward(a[fire])[0]
                    cache.out[fire] = o[fire]
                extra = None

            if not cache.valid or cfg.baseline_mode == "prev_iteration":
                cache.a_ref = a.copy()
            else:
                cache.a_ref[fire] = a[fire]
            fire_column[g_idx] = fire
            g_idx += 1
        inputs.append(a)
        outputs.append(o)
        aux.append(extra)
        a = o

    state.ledger.record(fire_column)
    tape = ForwardTape(inputs, outputs, aux, net.uid, net.version, fired=fire_column)
    return a, tape, fire_column


def spiking_backward(net: Network, tape: ForwardTape, fire_column, d_logits, surrogate: bool = True, output_grads: list | None = None):
    """Backward pass through a spiking tape; returns ``dL/dx``.

    Every gated layer applies the transpose of its linear map to the upstream
    gradient of this pass: the exact rule where it fired, the surrogate where
    it reused. With ``surrogate=False`` reused examples get a zero input
    gradient instead, which is what a plain autograd graph would produce.
    """
    check_tape(net, tape)
    fire_column = np.asarray(fire_column, dtype=bool)
    if tape.fired is None or fire_column.shape != tape.fired.shape or not np.array_equal(fire_column, tape.fired):
        raise ValueError("fire column does not match the tape")
    g = np.asarray(d_logits, dtype=DTYPE)
    if g.shape != tape.outputs[-1].shape:
        raise ValueError("d_logits shape does not match logits")
    gated = net.gated_indices
    upstream = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        upstream[i] = g
        if layer.gated:
            g = transpose_apply(layer, g)
            if not surrogate:
                reused = ~fire_column[gated.index(i)]
                if reused.any():
                    g = g.copy()
                    g[reused] = 0.0
        else:
            g, _ = layer.backward(tape.inputs[i], tape.aux[i], g)
    if output_grads is not None:
        output_grads.extend(upstream)
    return g
