"""Minimal dense-network substrate: parameter layout, forward/backward, Adam.

Parameters of a network live in a single flat float64 vector ("param
vector").  The layout is fixed by the layer sizes: for each layer, the
weight matrix (fan_in x fan_out, row major) followed by the bias vector.
Everything here is a pure function of its arguments, which is what makes
federated aggregation and drift measurement straightforward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully connected network."""

    layer_sizes: tuple[int, ...]
    hidden: str = "leaky_relu"
    hidden_slope: float = 0.2
    output: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError(f"need at least input and output sizes, got {self.layer_sizes}")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {self.layer_sizes}")
        if self.hidden not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden!r}")
        if self.output not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output!r}")
        if self.hidden == "leaky_relu" and not (0.0 < self.hidden_slope < 1.0):
            raise ValueError(f"leaky slope must be in (0, 1), got {self.hidden_slope}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes, self.layer_sizes[1:]))


def param_views(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """(weight, bias) views into the flat vector, one pair per layer."""
    if params.shape != (spec.n_params,):
        raise ValueError(f"param vector has length {params.shape}, spec needs ({spec.n_params},)")
    out = []
    offset = 0
    for a, b in zip(spec.layer_sizes, spec.layer_sizes[1:]):
        w = params[offset:offset + a * b].reshape(a, b)
        offset += a * b
        bias = params[offset:offset + b]
        offset += b
        out.append((w, bias))
    return out


def init_mlp(spec: MlpSpec, seed: int) -> np.ndarray:
    """Fresh parameters: weights ~ N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.n_params)
    for w, _ in param_views(spec, params):
        fan_in = w.shape[0]
        w[...] = rng.standard_normal(w.shape) / np.sqrt(fan_in)
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0.0, z, slope * z)
    if kind == "identity":
        return z
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return _sigmoid(z)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(h: np.ndarray, kind: str, slope: float) -> np.ndarray:
    """d(activation)/d(pre-activation), recovered from the activation value."""
    if kind == "relu":
        return (h > 0.0).astype(h.dtype)
    if kind == "leaky_relu":
        return np.where(h > 0.0, 1.0, slope)
    if kind == "identity":
        return np.ones_like(h)
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "sigmoid":
        return h * (1.0 - h)
    raise ValueError(f"unknown activation {kind!r}")


def _layer_kinds(spec: MlpSpec) -> list[str]:
    return [spec.hidden] * (spec.n_layers - 1) + [spec.output]


def forward_cached(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Run the network, returning the output and all layer activations.

    The cache (input plus every post-activation) is what backprop needs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(
            f"batch has shape {x.shape}, expected (batch, {spec.in_dim})"
        )
    acts = [x]
    kinds = _layer_kinds(spec)
    for (w, b), kind in zip(param_views(spec, params), kinds):
        z = acts[-1] @ w + b
        acts.append(_activate(z, kind, spec.hidden_slope))
    return acts[-1], acts


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched forward pass: (batch, in_dim) -> (batch, out_dim)."""
    y, _ = forward_cached(spec, params, x)
    return y


def backprop(
    spec: MlpSpec,
    params: np.ndarray,
    acts: list[np.ndarray],
    upstream: np.ndarray,
    need_input_grad: bool = False,
    need_param_grad: bool = True,
):
    """Backward pass from d(loss)/d(output) to parameter (and input) gradients."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != acts[-1].shape:
        raise ValueError(
            f"upstream gradient has shape {upstream.shape}, expected {acts[-1].shape}"
        )
    grad = np.zeros(spec.n_params) if need_param_grad else None
    views = param_views(spec, params)
    grad_views = param_views(spec, grad) if need_param_grad else None
    kinds = _layer_kinds(spec)
    dh = upstream
    input_grad = None
    for layer in range(spec.n_layers - 1, -1, -1):
        dz = dh * _activation_grad(acts[layer + 1], kinds[layer], spec.hidden_slope)
        if need_param_grad:
            gw, gb = grad_views[layer]
            gw[...] = acts[layer].T @ dz
            gb[...] = dz.sum(axis=0)
        if layer > 0:
            dh = dz @ views[layer][0].T
        elif need_input_grad:
            input_grad = dz @ views[layer][0].T
    return grad, input_grad


def backward(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of a loss w.r.t. the flat parameters, given d(loss)/d(output)."""
    _, acts = forward_cached(spec, params, x)
    grad, _ = backprop(spec, params, acts, upstream)
    return grad


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 0.001
    beta1: float = 0.0
    beta2: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.first_moment.copy(), self.second_moment.copy(), self.step_count)


def adam_step_inplace(
    params: np.ndarray,
    grads: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t_new: int,
    hyper: AdamHyper,
) -> None:
    """One bias-corrected Adam update, mutating params and both moments."""
    m *= hyper.beta1
    m += (1.0 - hyper.beta1) * grads
    v *= hyper.beta2
    v += (1.0 - hyper.beta2) * (grads * grads)
    m_hat = m / (1.0 - hyper.beta1 ** t_new)
    v_hat = v / (1.0 - hyper.beta2 ** t_new)
    params -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.epsilon)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, hyper: AdamHyper
) -> tuple[np.ndarray, AdamState]:
    """Pure Adam update: returns new parameters and advanced optimizer state."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError(f"grad shape {grads.shape} != param shape {params.shape}")
    if grads.shape != state.first_moment.shape:
        raise ValueError("optimizer state shape does not match parameters")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient entries (training diverged)")
    new_params = params.copy()
    new_state = state.copy()
    new_state.step_count += 1
    adam_step_inplace(
        new_params, grads, new_state.first_moment, new_state.second_moment,
        new_state.step_count, hyper,
    )
    return new_params, new_state
