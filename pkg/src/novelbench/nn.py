"""
Dense feed-forward networks with hand-written backpropagation and Adam.

Batches are row-major: an input batch has shape ``(n, d_in)`` and a layer
computes ``act(x @ W.T + b)`` with ``W`` of shape ``(d_out, d_in)``.
Networks are immutable; :func:`adam_step` returns a new :class:`Mlp`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._util import round_half_up

ACTIVATIONS = ("relu", "linear", "sigmoid")

# probabilities are clamped to this interval before taking logs
PROB_CLAMP = 1e-7


class ConfigurationError(ValueError):
    """Invalid architecture, hyperparameter or grid request."""


class TrainingError(RuntimeError):
    """Non-finite values appeared during optimisation."""


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Mlp:
    layers: tuple[Layer, ...]
    seed: int = 0

    def __post_init__(self):
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigurationError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        layers = tuple(
            Layer(params[2 * i], params[2 * i + 1], layer.activation)
            for i, layer in enumerate(self.layers))
        return Mlp(layers, self.seed)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[1]


@dataclass
class GradBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # gradient with respect to the network input, needed to chain networks
    input: np.ndarray | None = None

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __add__(self, other: "GradBundle") -> "GradBundle":
        return GradBundle(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, c: float) -> "GradBundle":
        return GradBundle([c * w for w in self.weights], [c * b for b in self.biases],
                          None if self.input is None else c * self.input)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _activation_grad(out: np.ndarray, kind: str) -> np.ndarray | None:
    # derivative expressed through the post-activation value
    if kind == "relu":
        return (out > 0).astype(out.dtype)
    if kind == "sigmoid":
        return out * (1.0 - out)
    return None


def mlp_new(layer_sizes: Sequence[int], hidden_activation: str = "relu",
            output_activation: str = "linear", seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"need >= 2 positive layer sizes, got {list(layer_sizes)}")
    for act in (hidden_activation, output_activation):
        if act not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {act!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = output_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Mlp(tuple(layers), seed)


def forward(mlp: Mlp, batch: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Run ``batch`` through the network.

    Returns the list of activations (``acts[0]`` is the input, ``acts[i+1]``
    the output of layer ``i``) together with the final output.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != mlp.in_dim:
        raise ValueError(f"input has {x.shape[1]} columns, network expects {mlp.in_dim}")
    acts = [x]
    for layer in mlp.layers:
        x = _activate(x @ layer.weight.T + layer.bias, layer.activation)
        acts.append(x)
    return acts, x


def backward(mlp: Mlp, activations: list[np.ndarray], output_gradient: np.ndarray,
             hidden_gradients: dict[int, np.ndarray] | None = None) -> GradBundle:
    """Reverse pass for a scalar loss with ``dL/d(output) = output_gradient``.

    ``hidden_gradients`` maps a layer index ``i`` to an extra gradient on that
    layer's output ``activations[i + 1]``; this is how losses defined on
    intermediate features enter the pass.
    """
    if len(activations) != len(mlp.layers) + 1:
        raise ValueError("activations do not match the network depth")
    g = np.asarray(output_gradient, dtype=float)
    if g.shape != activations[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} != output shape {activations[-1].shape}")
    hidden_gradients = hidden_gradients or {}
    n_layers = len(mlp.layers)
    dws: list[np.ndarray] = [None] * n_layers
    dbs: list[np.ndarray] = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if i in hidden_gradients:
            g = g + hidden_gradients[i]
        layer = mlp.layers[i]
        d_act = _activation_grad(activations[i + 1], layer.activation)
        delta = g if d_act is None else g * d_act
        dws[i] = delta.T @ activations[i]
        dbs[i] = delta.sum(axis=0)
        g = delta @ layer.weight
    return GradBundle(dws, dbs, g)


def adam_init(mlp: Mlp, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    zeros = [np.zeros_like(p) for p in mlp.params()]
    return AdamState([z.copy() for z in zeros], zeros, 0, lr, beta1, beta2, eps)


def adam_step(mlp: Mlp, grads: GradBundle, state: AdamState) -> tuple[Mlp, AdamState]:
    params = mlp.params()
    gs = grads.params()
    if len(gs) != len(params) or any(g.shape != p.shape for g, p in zip(gs, params)):
        raise ValueError("gradient bundle does not match network parameters")
    if not all(np.isfinite(g).all() for g in gs):
        raise TrainingError("non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p)
        new_m.append(m)
        new_v.append(v)
    if not all(np.isfinite(p).all() for p in new_params):
        raise TrainingError("non-finite parameters after update")
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return mlp.with_params(new_params), new_state


def mse_recon_loss(x: np.ndarray, x_hat: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch mean of squared Euclidean reconstruction errors, and d/dx_hat."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=float))
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    n = x.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def kl_gauss(mu: np.ndarray, log_var: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(N(mu, exp(log_var)) || N(0, I)) with gradients.

    1-D inputs are a single sample; 2-D inputs are a batch and the per-row
    divergences are averaged.
    """
    mu = np.asarray(mu, dtype=float)
    log_var = np.asarray(log_var, dtype=float)
    if mu.shape != log_var.shape:
        raise ValueError(f"shape mismatch {mu.shape} vs {log_var.shape}")
    if not (np.isfinite(mu).all() and np.isfinite(log_var).all()):
        raise ValueError("non-finite KL input")
    n = mu.shape[0] if mu.ndim == 2 else 1
    var = np.exp(log_var)
    kl = 0.5 * np.sum(mu * mu + var - log_var - 1.0) / n
    return float(kl), mu / n, 0.5 * (var - 1.0) / n


class AdversarialLosses(NamedTuple):
    d_loss: float
    g_loss: float
    d_grad_real: np.ndarray
    d_grad_fake: np.ndarray
    g_grad_fake: np.ndarray


def bce_logit_losses(real_logits: np.ndarray, fake_logits: np.ndarray) -> AdversarialLosses:
    """Discriminator and generator cross-entropies from discriminator logits.

    The losses use sigmoid probabilities clamped to
    ``[PROB_CLAMP, 1 - PROB_CLAMP]``. Gradients are with respect to the
    logits and use the unclamped sigmoid, so they do not vanish when the
    discriminator saturates.
    """
    real_logits = np.asarray(real_logits, dtype=float)
    fake_logits = np.asarray(fake_logits, dtype=float)
    p_real = sigmoid(real_logits)
    p_fake = sigmoid(fake_logits)
    pr = np.clip(p_real, PROB_CLAMP, 1 - PROB_CLAMP)
    pf = np.clip(p_fake, PROB_CLAMP, 1 - PROB_CLAMP)
    n_r, n_f = real_logits.shape[0], fake_logits.shape[0]
    d_loss = -np.mean(np.log(pr)) - np.mean(np.log(1.0 - pf))
    g_loss = -np.mean(np.log(pf))
    return AdversarialLosses(
        float(d_loss), float(g_loss),
        (p_real - 1.0) / n_r, p_fake / n_f, (p_fake - 1.0) / n_f,
    )


def feature_matching_loss(h_real: np.ndarray, h_fake: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over paired rows of ``||h_real - h_fake||_2`` and d/dh_fake.

    The norm is not squared; rows with zero distance get a zero subgradient.
    """
    h_real = np.asarray(h_real, dtype=float)
    h_fake = np.asarray(h_fake, dtype=float)
    if h_real.shape != h_fake.shape:
        raise ValueError(f"shape mismatch {h_real.shape} vs {h_fake.shape}")
    diff = h_fake - h_real
    norms = np.sqrt(np.sum(diff * diff, axis=1))
    n = diff.shape[0]
    safe = np.where(norms > 0, norms, 1.0)
    grad = np.where(norms[:, None] > 0, diff / safe[:, None], 0.0) / n
    return float(norms.mean()), grad


def interp_architecture(input_dim: int, code_dim: int, n_h: int) -> list[int]:
    """Hidden layer widths between ``input_dim`` and ``code_dim``.

    Width ``i`` (1-based) sits at fraction ``i / (n_h + 1)`` of the way from
    the input dimension to the code dimension, rounded half up, at least 1.
    The decoder uses the reversed list.
    """
    if n_h not in (1, 2, 3):
        raise ConfigurationError(f"n_h must be 1, 2 or 3, got {n_h}")
    if input_dim < 1 or code_dim < 1:
        raise ConfigurationError("dimensions must be positive")
    if code_dim > input_dim:
        raise ConfigurationError(f"code_dim {code_dim} exceeds input_dim {input_dim}")
    step = (input_dim - code_dim) / (n_h + 1)
    return [max(1, round_half_up(input_dim - i * step)) for i in range(1, n_h + 1)]
