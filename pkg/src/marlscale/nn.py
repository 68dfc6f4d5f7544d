"""Dense feed-forward networks with analytic gradients, Adam and Polyak updates.

Every actor and critic in the package is an :class:`MlpNetwork`: a stack of
affine layers with ReLU between them and either an identity or a tanh head.
Gradients are written out by hand, so the whole training stack runs on numpy
alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

ACTIVATIONS = ("identity", "tanh")
DEFAULT_HIDDEN = (64, 64)


@dataclass
class DenseLayer:
    weights: np.ndarray  # [out x in]
    bias: np.ndarray  # [out]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpNetwork:
    layers: List[DenseLayer]
    output_activation: str = "identity"

    def __post_init__(self):
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.input_dim != prev.output_dim:
                raise ValueError("layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [layer.weights.shape for layer in self.layers]

    def params(self) -> List[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            [DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.layers],
            self.output_activation,
        )


@dataclass
class ForwardCache:
    # input to each layer; inputs[k] for k >= 1 is the ReLU output of layer k-1
    inputs: List[np.ndarray]
    output: np.ndarray
    pre_output: np.ndarray  # output layer before its activation


@dataclass
class AdamState:
    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, net: MlpNetwork) -> "AdamState":
        return cls(
            [np.zeros_like(p) for p in net.params()],
            [np.zeros_like(p) for p in net.params()],
        )


def init_mlp(
    input_dim: int,
    output_dim: int,
    output_activation: str = "identity",
    rng: np.random.Generator | None = None,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    dtype=np.float64,
) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1 or output_dim < 1 or any(h < 1 for h in hidden):
        raise ValueError("network dimensions must be positive")
    if rng is None:
        rng = np.random.default_rng()
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)
        layers.append(DenseLayer(w, np.zeros(fan_out, dtype=dtype)))
    return MlpNetwork(layers, output_activation)


def forward(net: MlpNetwork, x: np.ndarray, check: bool = True) -> Tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"expected input of shape [batch x {net.input_dim}], got {x.shape}")
    if check and not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    inputs = []
    h = x
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        inputs.append(h)
        h = h @ layer.weights.T
        h += layer.bias
        if k < last:
            np.maximum(h, 0.0, out=h)
    pre = h
    if net.output_activation == "tanh":
        h = np.tanh(pre)
    return h, ForwardCache(inputs, h, pre)


def predict(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    """Forward pass without keeping a cache or validating input."""
    h = x
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        h = h @ layer.weights.T + layer.bias
        if k < last:
            np.maximum(h, 0.0, out=h)
    if net.output_activation == "tanh":
        np.tanh(h, out=h)
    return h


def backward(
    net: MlpNetwork,
    cache: ForwardCache,
    output_grad: np.ndarray,
    need_input_grad: bool = True,
    need_param_grads: bool = True,
    pre_output_grad: np.ndarray | None = None,
) -> Tuple[List[np.ndarray] | None, np.ndarray | None]:
    """Backpropagate ``output_grad`` through ``net``.

    Parameter gradients are those of ``mean_b <output_grad[b], out[b]>``,
    i.e. already averaged over the batch, so a per-row loss derivative can be
    passed in directly. The input gradient is returned per row and is *not*
    divided by the batch size: row ``b`` is ``d<output_grad[b], out[b]>/dx[b]``.
    This lets the critic's action gradient be fed straight into the actor.
    ``pre_output_grad`` is an extra per-row gradient with respect to the
    output layer's pre-activation (e.g. from a penalty on pre-tanh values).
    """
    if len(cache.inputs) != len(net.layers) or cache.inputs[0].shape[1] != net.input_dim:
        raise ValueError("forward cache does not belong to this network")
    g = np.asarray(output_grad)
    if g.shape != cache.output.shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {cache.output.shape}")
    batch = g.shape[0]
    if net.output_activation == "tanh":
        g = g * (1.0 - cache.output**2)
    if pre_output_grad is not None:
        g = g + pre_output_grad
    grads = [None] * (2 * len(net.layers)) if need_param_grads else None
    input_grad = None
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if need_param_grads:
            grads[2 * k] = (cache.inputs[k].T @ g).T / batch
            grads[2 * k + 1] = g.sum(axis=0) / batch
        if k > 0:
            g = g @ layer.weights
            g *= cache.inputs[k] > 0
        elif need_input_grad:
            input_grad = g @ layer.weights
    return grads, input_grad


def adam_step(net: MlpNetwork, grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam step, in place. Rejects non-finite gradients."""
    params = net.params()
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise ValueError("non-finite gradient; parameters left untouched")
    state.step_count += 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1**state.step_count
    c2 = 1.0 - b2**state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def soft_update(target: MlpNetwork, source: MlpNetwork, tau: float) -> None:
    """Polyak averaging: target <- tau * source + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.shapes != source.shapes:
        raise ValueError("target and source architectures differ")
    for t, s in zip(target.params(), source.params()):
        if tau == 1.0:
            t[...] = s
        else:
            t *= 1.0 - tau
            t += tau * s


def param_count(net: MlpNetwork) -> int:
    return sum(out * inp + out for out, inp in net.shapes)
