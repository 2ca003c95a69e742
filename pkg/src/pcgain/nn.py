"""Small dense networks in float64 numpy: forward/backward passes, Adam and gradient checking.

Weights are stored ``out x in`` and a layer computes ``act(x @ W.T + b)``.
Loss helpers elsewhere return gradients that already include the 1/B batch
factor, so :func:`backward` simply chains them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DivergenceError

RELU, SIGMOID, TANH, SOFTMAX, IDENTITY = "relu", "sigmoid", "tanh", "softmax", "identity"
ACTIVATIONS = (RELU, SIGMOID, TANH, SOFTMAX, IDENTITY)

LOG_EPS = 1e-8


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = IDENTITY

    @property
    def in_width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.shape[0]


@dataclass
class NetParams:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.activation == SOFTMAX and i != len(self.layers) - 1:
                raise ValueError("softmax is only allowed as the final activation")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.out_width,):
                raise ValueError(f"layer {i}: weight {layer.weight.shape} / bias {layer.bias.shape} mismatch")
            if i and layer.in_width != self.layers[i - 1].out_width:
                raise ValueError(f"layer {i}: input width {layer.in_width} != previous output width")
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def in_width(self) -> int:
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width

    def arrays(self) -> list[np.ndarray]:
        """Parameters in canonical order ``W0, b0, W1, b1, ...`` (views, not copies)."""
        return [a for layer in self.layers for a in (layer.weight, layer.bias)]

    def copy(self) -> "NetParams":
        return NetParams([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for layer in self.layers:
            h.update(layer.activation.encode())
            for a in (layer.weight, layer.bias):
                h.update(str(a.shape).encode())
                h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())


def init_net(widths: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> NetParams:
    """Xavier-uniform weights, zero biases. ``widths`` includes input and output widths."""
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per weight layer")
    layers = []
    for fan_in, fan_out, act in zip(widths[:-1], widths[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return NetParams(layers)


def mlp(in_width: int, hidden: Sequence[int], out_width: int, hidden_act: str, out_act: str, rng) -> NetParams:
    widths = [in_width, *hidden, out_width]
    return init_net(widths, [hidden_act] * len(hidden) + [out_act], rng)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == RELU:
        return np.maximum(z, 0.0)
    if act == SIGMOID:
        return expit(z)
    if act == TANH:
        return np.tanh(z)
    if act == SOFTMAX:
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return z


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def forward(net: NetParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_width:
        raise ValueError(f"input shape {x.shape} does not match network input width {net.in_width}")
    if not np.isfinite(x).all():
        raise DivergenceError("non-finite network input")
    cache = ForwardCache()
    h = x
    for layer in net.layers:
        z = h @ layer.weight.T + layer.bias
        out = _activate(z, layer.activation)
        cache.inputs.append(h)
        cache.preacts.append(z)
        cache.outputs.append(out)
        h = out
    return h, cache


def predict(net: NetParams, x: np.ndarray) -> np.ndarray:
    return forward(net, x)[0]


Grads = list[tuple[np.ndarray, np.ndarray]]


def backward(net: NetParams, cache: ForwardCache, output_grad: np.ndarray) -> tuple[Grads, np.ndarray]:
    """Return per-layer ``(dW, db)`` and the gradient with respect to the network input."""
    if len(cache.inputs) != len(net.layers):
        raise ValueError("cache was not produced by this network")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {cache.outputs[-1].shape}")
    grads: Grads = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        y, z, x = cache.outputs[i], cache.preacts[i], cache.inputs[i]
        if layer.weight.shape != (z.shape[1], x.shape[1]):
            raise ValueError("cache was not produced by this network")
        act = layer.activation
        if act == RELU:
            gz = g * (z > 0)
        elif act == SIGMOID:
            gz = g * y * (1.0 - y)
        elif act == TANH:
            gz = g * (1.0 - y * y)
        elif act == SOFTMAX:
            gz = y * (g - np.sum(g * y, axis=1, keepdims=True))
        else:
            gz = g
        grads[i] = (gz.T @ x, gz.sum(axis=0))
        g = gz @ layer.weight
    return grads, g


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: NetParams, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.step_count,
            self.beta1,
            self.beta2,
            self.epsilon,
        )


def adam_step(
    state: AdamState,
    params: NetParams,
    grads: Grads,
    learning_rate: float,
    diagnostics: dict | None = None,
) -> tuple[AdamState, NetParams]:
    """One bias-corrected Adam update, applied in place; returns ``(state, params)`` for chaining."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    flat = [a for pair in grads for a in pair]
    arrays = params.arrays()
    if len(flat) != len(arrays) or any(g.shape != p.shape for g, p in zip(flat, arrays)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in flat):
        raise DivergenceError("non-finite gradient; refusing Adam update", diagnostics)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(arrays, flat, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state, params


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def relu_pattern(net: NetParams, x: np.ndarray) -> list[np.ndarray]:
    _, cache = forward(net, x)
    return [z > 0 for z, l in zip(cache.preacts, net.layers) if l.activation == RELU]


def grad_check(
    net: NetParams,
    loss: LossFn,
    probe: np.ndarray,
    step: float = 1e-5,
    *,
    n_params: int = 200,
    seed: int = 0,
    corrupt: bool = False,
    kinks: Callable[[np.ndarray], list[np.ndarray]] | None = None,
    floor: float = 1e-6,
) -> float:
    """Max relative error between backprop and central finite differences.

    ``loss`` maps the network output to ``(value, d value / d output)``. At
    least ``n_params`` parameters (or all of them, if fewer) are sampled; a
    probe whose ReLU activation pattern differs between ``+step`` and ``-step``
    straddles a kink and is replaced by another draw; ``kinks`` maps the
    network output to the activation pattern of any ReLU network inside
    ``loss`` so those kinks are avoided too. With ``corrupt`` the
    analytic gradient of the largest sampled entry is doubled, which any
    working checker must flag.

    Each entry scores ``|a - n| / max(|a| + |n|, floor)``. The floor keeps
    entries far below central-difference round-off from dominating.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    out, cache = forward(net, probe)
    _, gout = loss(out)
    grads, _ = backward(net, cache, gout)
    arrays = net.arrays()
    analytic = [g for pair in grads for g in pair]
    sizes = np.array([a.size for a in arrays])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    want = min(total, max(n_params, 200))
    has_relu = any(l.activation == RELU for l in net.layers)

    chosen, numeric, exact = [], [], []
    for flat_index in order:
        if len(chosen) == want:
            break
        k = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        local = np.unravel_index(int(flat_index - offsets[k]), arrays[k].shape)
        p = arrays[k]
        orig = p[local]
        p[local] = orig + step
        out_plus = forward(net, probe)[0]
        plus = loss(out_plus)[0]
        pat_plus = relu_pattern(net, probe) if has_relu else []
        p[local] = orig - step
        out_minus = forward(net, probe)[0]
        minus = loss(out_minus)[0]
        pat_minus = relu_pattern(net, probe) if has_relu else []
        p[local] = orig
        if kinks is not None:
            pat_plus = pat_plus + list(kinks(out_plus))
            pat_minus = pat_minus + list(kinks(out_minus))
        if any(not np.array_equal(a, b) for a, b in zip(pat_plus, pat_minus)):
            continue
        chosen.append((k, local))
        numeric.append((plus - minus) / (2.0 * step))
        exact.append(float(analytic[k][local]))

    exact_arr = np.array(exact)
    numeric_arr = np.array(numeric)
    if corrupt and len(exact_arr):
        j = int(np.argmax(np.abs(exact_arr)))
        exact_arr[j] *= 2.0
    denom = np.maximum(np.abs(exact_arr) + np.abs(numeric_arr), floor)
    return float(np.max(np.abs(exact_arr - numeric_arr) / denom)) if len(denom) else 0.0
