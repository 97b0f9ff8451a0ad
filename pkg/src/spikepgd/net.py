"""Sequential networks with exact forward and reverse-mode backward passes.

Only ``Dense`` and ``Conv2d`` are linear maps; those are the layers the spiking
gate may skip. Everything operates on batches: the leading axis is the example
index.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, SeededRandom

_net_ids = itertools.count()


class StaleTapeError(RuntimeError):
    """Raised when a tape is replayed against a network it did not come from."""


# --------------------------------------------------------------------------
# layers


class Layer:
    kind = "layer"
    gated = False

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def forward(self, x):
        """Return ``(output, aux)``; ``aux`` is whatever backward needs."""
        raise NotImplementedError

    def backward(self, x, aux, g):
        """Return ``(d_input, param_grads)``."""
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}


class Dense(Layer):
    kind = "dense"
    gated = True

    def __init__(self, in_features: int, out_features: int, weight=None, bias=None):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.weight = (
            np.zeros((self.out_features, self.in_features), DTYPE)
            if weight is None
            else np.array(weight, dtype=DTYPE)
        )
        self.bias = (
            np.zeros(self.out_features, DTYPE) if bias is None else np.array(bias, dtype=DTYPE)
        )
        if self.weight.shape != (self.out_features, self.in_features):
            raise ValueError(f"dense weight shape {self.weight.shape} inconsistent")
        if self.bias.shape != (self.out_features,):
            raise ValueError(f"dense bias shape {self.bias.shape} inconsistent")

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def forward(self, x):
        return x @ self.weight.T + self.bias, None

    def input_grad(self, g):
        return g @ self.weight

    def backward(self, x, aux, g):
        return self.input_grad(g), {"weight": g.T @ x, "bias": g.sum(axis=0)}

    def macs(self, in_shape) -> int:
        return self.in_features * self.out_features

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features, "out_features": self.out_features}


class Conv2d(Layer):
    """Stride-1 convolution, zero padded so spatial size is preserved."""

    kind = "conv2d"
    gated = True

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, weight=None, bias=None):
        if kernel_size % 2 != 1:
            raise ValueError("same padding needs an odd kernel size")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        wshape = (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)
        self.weight = np.zeros(wshape, DTYPE) if weight is None else np.array(weight, dtype=DTYPE)
        self.bias = (
            np.zeros(self.out_channels, DTYPE) if bias is None else np.array(bias, dtype=DTYPE)
        )
        if self.weight.shape != wshape:
            raise ValueError(f"conv weight shape {self.weight.shape} inconsistent, want {wshape}")
        if self.bias.shape != (self.out_channels,):
            raise ValueError(f"conv bias shape {self.bias.shape} inconsistent")

    @property
    def pad(self) -> int:
        return self.kernel_size // 2

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ValueError(f"conv2d expects ({self.in_channels}, H, W), got {tuple(in_shape)}")
        return (self.out_channels, in_shape[1], in_shape[2])

    def _cols(self, x):
        n, c, h, w = x.shape
        k, p = self.kernel_size, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        # (n, c, h, w, k, k) -> (n*h*w, c*k*k)
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)

    def forward(self, x):
        n, _, h, w = x.shape
        cols = self._cols(x)
        wmat = self.weight.reshape(self.out_channels, -1)
        out = (cols @ wmat.T).reshape(n, h, w, self.out_channels).transpose(0, 3, 1, 2)
        return out + self.bias[None, :, None, None], None

    def input_grad(self, g):
        n, _, h, w = g.shape
        k, p, c = self.kernel_size, self.pad, self.in_channels
        gmat = g.transpose(0, 2, 3, 1).reshape(n * h * w, self.out_channels)
        dcols = (gmat @ self.weight.reshape(self.out_channels, -1)).reshape(n, h, w, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), DTYPE)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w]

    def backward(self, x, aux, g):
        cols = self._cols(x)
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        dw = (gmat.T @ cols).reshape(self.weight.shape)
        return self.input_grad(g), {"weight": dw, "bias": g.sum(axis=(0, 2, 3))}

    def macs(self, in_shape) -> int:
        _, h, w = in_shape
        return h * w * self.in_channels * self.out_channels * self.kernel_size**2

    def spec(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
        }


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, x, aux, g):
        return g * aux, {}


class MaxPool2x2(Layer):
    kind = "maxpool2x2"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2x2 needs even spatial extents, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        n, c, h, w = x.shape
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
        idx = np.argmax(blocks, axis=-1)
        out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return out, idx

    def backward(self, x, aux, g):
        n, c, h, w = x.shape
        blocks = np.zeros((n, c, h // 2, w // 2, 4), DTYPE)
        np.put_along_axis(blocks, aux[..., None], g[..., None], axis=-1)
        dx = blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(n, c, h, w), {}


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, x, aux, g):
        return g.reshape(aux), {}


_LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2d, ReLU, MaxPool2x2, Flatten)}


def layer_from_spec(spec: dict, params: dict | None = None) -> Layer:
    spec = dict(spec)
    cls = _LAYER_KINDS.get(spec.pop("kind"))
    if cls is None:
        raise ValueError(f"unknown layer kind in {spec}")
    return cls(**spec, **(params or {}))


# --------------------------------------------------------------------------
# network


@dataclass
class Network:
    layers: list[Layer]
    input_shape: tuple[int, ...]
    class_count: int
    version: int = 0
    uid: int = field(default_factory=lambda: next(_net_ids))

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.out_shape(shapes[-1]))
        if shapes[-1] != (self.class_count,):
            raise ValueError(f"network emits {shapes[-1]}, expected ({self.class_count},)")
        self.shapes = shapes

    @property
    def gated_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.gated]

    def layer_macs(self) -> list[int]:
        """MACs per example for every gated layer, in network order."""
        return [mac_cost(self.layers[i], self.shapes[i]) for i in self.gated_indices]

    def bump(self):
        """Mark parameters as modified; outstanding tapes become stale."""
        self.version += 1

    def predict(self, x) -> np.ndarray:
        logits, _ = forward(self, x)
        return np.argmax(logits, axis=1)

    def copy(self) -> "Network":
        layers = [layer_from_spec(l.spec(), {k: v.copy() for k, v in l.params().items()}) for l in self.layers]
        return Network(layers, self.input_shape, self.class_count)


@dataclass
class ForwardTape:
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    aux: list
    net_uid: int
    net_version: int
    fired: np.ndarray | None = None  # set by the spiking forward pass

    def __len__(self):
        return len(self.inputs)


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[1:] != net.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match network input {net.input_shape}")
    return x


def forward(net: Network, x) -> tuple[np.ndarray, ForwardTape]:
    x = _check_input(net, x)
    inputs, outputs, aux = [], [], []
    a = x
    for layer in net.layers:
        o, extra = layer.forward(a)
        inputs.append(a)
        outputs.append(o)
        aux.append(extra)
        a = o
    return a, ForwardTape(inputs, outputs, aux, net.uid, net.version)


def check_tape(net: Network, tape: ForwardTape):
    if tape.net_uid != net.uid or tape.net_version != net.version or len(tape) != len(net.layers):
        raise StaleTapeError("tape was not produced by this network state")


def backward(net: Network, tape: ForwardTape, d_logits, output_grads: list | None = None):
    """Exact reverse-mode pass. Returns ``(d_input, param_grads)``.

    ``param_grads`` has one dict per layer (empty for parameter-free layers).
    If ``output_grads`` is a list it receives ``dL/d(output)`` for every layer,
    in network order.
    """
    check_tape(net, tape)
    g = np.asarray(d_logits, dtype=DTYPE)
    if g.shape != tape.outputs[-1].shape:
        raise ValueError(f"d_logits shape {g.shape} does not match logits {tape.outputs[-1].shape}")
    grads: list[dict] = [None] * len(net.layers)
    upstream = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        upstream[i] = g
        g, grads[i] = net.layers[i].backward(tape.inputs[i], tape.aux[i], g)
    if output_grads is not None:
        output_grads.extend(upstream)
    return g, grads


def transpose_apply(layer: Layer, g) -> np.ndarray:
    """Apply the transpose of a gated layer's linear map (bias excluded)."""
    if not layer.gated:
        raise TypeError(f"transpose_apply needs a dense or conv2d layer, got {layer.kind}")
    return layer.input_grad(np.asarray(g, dtype=DTYPE))


def mac_cost(layer: Layer, input_shape) -> int:
    if not layer.gated:
        return 0
    return int(layer.macs(tuple(input_shape)))


def cross_entropy(logits, label):
    """Softmax cross-entropy and its logit gradient.

    Accepts a single logit vector with an integer label (returns a float
    loss) or a batch ``(N, K)`` with a label array (returns per-example
    losses). Gradients are per example, not averaged.
    """
    z = np.asarray(logits, dtype=DTYPE)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    y = np.atleast_1d(np.asarray(label))
    k = z.shape[1]
    if y.shape != (z.shape[0],):
        raise ValueError("one label per example required")
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"label out of range for {k} classes")
    y = y.astype(np.int64)
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(z.shape[0])
    loss = lse - shifted[rows, y]
    d = np.exp(shifted - lse[:, None])
    d[rows, y] -= 1.0
    if single:
        return float(loss[0]), d[0]
    return loss, d


# --------------------------------------------------------------------------
# construction, training, persistence


def init_params(net: Network, rng: SeededRandom) -> Network:
    """He-normal weights, zero biases."""
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dense):
            fan_in = layer.in_features
        elif isinstance(layer, Conv2d):
            fan_in = layer.in_channels * layer.kernel_size**2
        else:
            continue
        layer.weight[...] = rng.normal(layer.weight.shape, scale=np.sqrt(2.0 / fan_in))
        layer.bias[...] = 0.0
    net.bump()
    return net


def desk_cnn(input_shape=(3, 16, 16), class_count: int = 10, width: int = 8, rng: SeededRandom | None = None) -> Network:
    """conv(c->w) relu pool conv(w->2w) relu pool flatten dense."""
    c, h, w = input_shape
    layers = [
        Conv2d(c, width, 3),
        ReLU(),
        MaxPool2x2(),
        Conv2d(width, 2 * width, 3),
        ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(2 * width * (h // 4) * (w // 4), class_count),
    ]
    net = Network(layers, input_shape, class_count)
    return init_params(net, rng or SeededRandom(0))


def mlp(sizes: list[int], rng: SeededRandom | None = None) -> Network:
    """Dense/ReLU stack; ``sizes`` lists the feature count of every layer boundary."""
    layers: list[Layer] = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i:
            layers.append(ReLU())
        layers.append(Dense(a, b))
    net = Network(layers, (sizes[0],), sizes[-1])
    return init_params(net, rng or SeededRandom(0))


def sgd_step(net: Network, grads: list[dict], lr: float):
    for layer, g in zip(net.layers, grads):
        for name, p in layer.params().items():
            p -= lr * g[name]
    net.bump()


def train_batch(net: Network, x, y, lr: float) -> float:
    """One SGD step on the mean cross-entropy of a batch; returns that mean."""
    logits, tape = forward(net, x)
    losses, d = cross_entropy(logits, y)
    _, grads = backward(net, tape, d / len(y))
    if lr:
        sgd_step(net, grads, lr)
    return float(losses.mean())


def sgd_epoch(net: Network, data, lr: float, rng: SeededRandom, batch_size: int = 32) -> float:
    """One shuffled pass of minibatch SGD. Returns the example-weighted mean loss."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    n = len(data.labels)
    if n == 0:
        raise ValueError("empty dataset")
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        total += train_batch(net, data.images[idx], data.labels[idx], lr) * len(idx)
    return total / n


def accuracy(net: Network, x, y) -> float:
    if len(y) == 0:
        return 0.0
    return float(np.mean(net.predict(x) == np.asarray(y)))


def save_network(net: Network, path):
    meta = {
        "format": "spikepgd-network/1",
        "input_shape": list(net.input_shape),
        "class_count": net.class_count,
        "layers": [layer.spec() for layer in net.layers],
    }
    arrays = {}
    for i, layer in enumerate(net.layers):
        for name, p in layer.params().items():
            arrays[f"l{i}.{name}"] = p
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_network(path) -> Network:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        layers = []
        for i, spec in enumerate(meta["layers"]):
            params = {k.split(".", 1)[1]: z[k] for k in z.files if k.startswith(f"l{i}.")}
            layers.append(layer_from_spec(spec, params))
    return Network(layers, tuple(meta["input_shape"]), meta["class_count"])
