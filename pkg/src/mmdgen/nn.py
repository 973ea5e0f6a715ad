"""Multilayer perceptron with manual reverse-mode gradients and Adam.

The network maps a prior sample to points in the open unit hypercube:
ReLU on hidden layers, a numerically stable sigmoid on the output layer.
Gradients are accumulated against an externally supplied loss gradient
dL/dY, which keeps the loss function (here: squared kernel discrepancy)
decoupled from the network plumbing.  All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericFailure(RuntimeError):
    """Raised when an update step receives non-finite gradients."""


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer shape of a fixed-topology generator network."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input and output dimensions must be >= 1")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be non-empty with positive entries")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, input to output."""
        sizes = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return list(zip(sizes[:-1], sizes[1:]))


class MlpModel:
    """Weights [out x in] and biases [out] per layer, plus the architecture."""

    def __init__(self, arch: MlpArchitecture, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(arch.layer_dims) or len(biases) != len(weights):
            raise ValueError("parameter count does not match architecture")
        for (d_in, d_out), w, b in zip(arch.layer_dims, weights, biases):
            if w.shape != (d_out, d_in) or b.shape != (d_out,):
                raise ValueError("parameter shapes do not chain through the architecture")
        self.arch = arch
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if not all(np.isfinite(w).all() for w in self.weights) or not all(
            np.isfinite(b).all() for b in self.biases
        ):
            raise ValueError("parameters must be finite")

    def param_arrays(self) -> list[np.ndarray]:
        """Live parameter arrays in canonical order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for a in self.param_arrays():
            a[...] = flat[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def copy(self) -> "MlpModel":
        return MlpModel(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_model(arch: MlpArchitecture, seed) -> MlpModel:
    """Initialize all parameters of each layer uniform on (-1/sqrt(fan_in), +1/sqrt(fan_in)).

    seed may be an integer or a numpy Generator.  Draw order (weights then
    bias, layer by layer) is fixed, so equal seeds give bitwise-equal models.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in arch.layer_dims:
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
        biases.append(rng.uniform(-bound, bound, size=d_out))
    return MlpModel(arch, weights, biases)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Two-branch form: never exponentiates a positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # Guard the open-interval contract against saturation at float limits.
    tiny = np.finfo(np.float64).tiny
    return np.clip(out, tiny, 1.0 - 2.0**-53)


@dataclass
class ForwardTape:
    """Activations needed to run the backward pass of one forward call."""

    inputs: list  # input to each layer (post-activation of the previous one)
    output: np.ndarray  # sigmoid output of the final layer
    n_layers: int


def forward(model: MlpModel, Z: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Evaluate the network rowwise on Z [n x input_dim].

    Returns (Y, tape) with Y strictly inside (0,1)^output_dim.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.arch.input_dim:
        raise ValueError("input column count must equal the architecture input dimension")
    a = Z
    inputs = []
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        pre = a @ w.T + b
        a = _sigmoid(pre) if l == last else np.maximum(pre, 0.0)
    return a, ForwardTape(inputs=inputs, output=a, n_layers=len(model.weights))


def backward(model: MlpModel, tape: ForwardTape, dL_dY: np.ndarray) -> list[np.ndarray]:
    """Exact parameter gradients given the loss gradient at the output.

    Returns arrays in canonical order (dW0, db0, dW1, db1, ...).  The ReLU
    subgradient at exactly 0 is taken as 0.
    """
    dL_dY = np.asarray(dL_dY, dtype=np.float64)
    if tape.n_layers != len(model.weights) or dL_dY.shape != tape.output.shape:
        raise ValueError("tape or output gradient does not match the model")
    y = tape.output
    delta = dL_dY * y * (1.0 - y)
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))
    for l in range(len(model.weights) - 1, -1, -1):
        a_in = tape.inputs[l]
        grads[2 * l] = delta.T @ a_in
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            # a_in > 0 is the ReLU mask of the previous layer's output.
            delta = (delta @ model.weights[l]) * (tape.inputs[l] > 0)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        zeros = [np.zeros_like(a) for a in model.param_arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], beta1=beta1, beta2=beta2, eps=eps)


def adam_step(model: MlpModel, grads: list, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place.  Rejects non-finite gradients."""
    params = model.param_arrays()
    if len(grads) != len(params):
        raise ValueError("gradient structure does not match the model")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericFailure("non-finite gradient entries; step rejected")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state
