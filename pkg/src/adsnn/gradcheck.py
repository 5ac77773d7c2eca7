"""Finite-difference verification of the hand-written backward pass.

The spiking threshold makes the real network non-differentiable, so the
check runs in the smooth-spike build: spikes are sigmoids of the membrane
potential and the backward pass uses the exact sigmoid derivative.  In that
build the analytic gradient must agree with central finite differences of
the loss for every parameter tensor.

Delays are drawn with fractional parts well inside (0, 1); at integer
values the linear-interpolation forward model has a kink and central
differences straddle it.

Error measure per coordinate: |analytic - fd| / max(|analytic|, |fd|, 1),
i.e. relative error for large gradients with an absolute floor of the same
tolerance for small ones.
"""

from __future__ import annotations

import numpy as np

from adsnn.delay import DelayMatrix
from adsnn.network import NetworkConfig, SNNModel, SynapseSet, xavier_uniform
from adsnn.neuron import NeuronParams
from adsnn.training import backward, cross_entropy

DEFAULT_SLOPE = 4.0
DEFAULT_EPS = 1e-4
DEFAULT_TOL = 1e-5

PARAM_CLASSES = ("weights", "bias", "delays", "alpha", "beta", "a", "b")


def build_random_model(seed: int, num_inputs: int = 6, num_hidden: int = 8,
                       num_classes: int = 4, num_timesteps: int = 12,
                       d_max: int = 5, readout_mode: str = "softmax_sum"):
    """Small random network plus a random input batch and labels."""
    rng = np.random.default_rng(seed)
    config = NetworkConfig(
        num_inputs=num_inputs, num_hidden=num_hidden, num_classes=num_classes,
        num_timesteps=num_timesteps, d_max=d_max, dropout=0.0,
        readout_mode=readout_mode, state_init="zeros",
    )
    sizes = config.layer_sizes()
    synapses = []
    for pre, post in zip(sizes[:-1], sizes[1:]):
        # Fractional parts in [0.1, 0.9] keep finite differences away from
        # the interpolation kinks at integer delays.
        d = rng.integers(0, d_max - 1, size=(pre, post)) + rng.uniform(0.1, 0.9, (pre, post))
        synapses.append(SynapseSet(
            weights=1.5 * xavier_uniform((pre, post), rng),
            bias=rng.uniform(-0.2, 0.2, size=post),
            delays=DelayMatrix(d, d_max),
        ))
    neurons = [NeuronParams(alpha=rng.uniform(0.4, 0.9, num_hidden),
                            beta=rng.uniform(0.962, 0.988, num_hidden),
                            a=rng.uniform(0.1, 0.9, num_hidden),
                            b=rng.uniform(0.1, 1.8, num_hidden))
               for _ in range(2)]
    model = SNNModel(config, synapses, neurons)

    batch = 3
    x = rng.uniform(0.0, 1.5, size=(batch, num_timesteps, num_inputs))
    y = rng.integers(0, num_classes, size=batch)
    return model, x, y


def _loss(model: SNNModel, x, y, slope: float) -> float:
    scores, _, _ = model.forward(x, mode="eval", soft_slope=slope)
    return cross_entropy(scores, y)


def _fd_grad(model, x, y, slope, array, eps):
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = _loss(model, x, y, slope)
        flat[i] = orig - eps
        down = _loss(model, x, y, slope)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * eps)
    return grad


def _error(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1.0)
    return float((np.abs(analytic - fd) / denom).max())


def gradcheck(seed: int, slope: float = DEFAULT_SLOPE, eps: float = DEFAULT_EPS,
              **model_kwargs) -> dict:
    """Compare analytic and finite-difference gradients for one random net.

    Returns a dict mapping each parameter class to its max error.
    """
    model, x, y = build_random_model(seed, **model_kwargs)
    scores, record, _ = model.forward(x, mode="eval", soft_slope=slope)
    grads = backward(record, y, model)

    errors = {name: 0.0 for name in PARAM_CLASSES}
    for c, syn in enumerate(model.synapses):
        pairs = [("weights", syn.weights, grads.d_weights[c]),
                 ("bias", syn.bias, grads.d_bias[c]),
                 ("delays", syn.delays.d, grads.d_delays[c])]
        for name, arr, analytic in pairs:
            fd = _fd_grad(model, x, y, slope, arr, eps)
            errors[name] = max(errors[name], _error(analytic, fd))
    for l, p in enumerate(model.neurons):
        pairs = [("alpha", p.alpha, grads.d_alpha[l]),
                 ("beta", p.beta, grads.d_beta[l]),
                 ("a", p.a, grads.d_a[l]),
                 ("b", p.b, grads.d_b[l])]
        for name, arr, analytic in pairs:
            fd = _fd_grad(model, x, y, slope, arr, eps)
            errors[name] = max(errors[name], _error(analytic, fd))
    return errors


def gradcheck_many(seeds, tol: float = DEFAULT_TOL, **kwargs):
    """Run gradcheck over several seeds; returns (worst_errors, passed)."""
    worst = {name: 0.0 for name in PARAM_CLASSES}
    for seed in seeds:
        errors = gradcheck(seed, **kwargs)
        for name, err in errors.items():
            worst[name] = max(worst[name], err)
    passed = all(err < tol for err in worst.values())
    return worst, passed
