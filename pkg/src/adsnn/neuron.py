"""Adaptive leaky integrate-and-fire (AdLIF+) neuron dynamics.

The neuron keeps two internal states, the membrane potential ``u`` and an
adaptation current ``w``, plus the spike indicator ``s`` of the previous
step.  The discrete-time update is

    u[t] = alpha * u[t-1] + (1 - alpha) * (I[t] - w[t-1]) - theta * s[t-1]
    w[t] = beta * w[t-1] + (1 - beta) * a * u[t-1] + b * s[t-1]
    s[t] = u[t] >= theta

with per-neuron trainable parameters alpha, beta, a, b.  With a = b = 0 and
w initialized at zero this reduces to a plain LIF neuron with leak alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Parameter boundaries: uniform initialization ranges and clipping bounds.
ALPHA_BOUNDS = (0.36, 0.96)
BETA_BOUNDS = (0.96, 0.99)
A_BOUNDS = (0.0, 1.0)
B_BOUNDS = (0.0, 2.0)

DEFAULT_THETA = 1.0


@dataclass
class NeuronParams:
    """Per-neuron trainable parameters of one layer."""

    alpha: np.ndarray  # membrane leak factor
    beta: np.ndarray   # adaptation leak factor
    a: np.ndarray      # subthreshold adaptation coupling
    b: np.ndarray      # spike-triggered adaptation increment

    def __post_init__(self):
        n = len(self.alpha)
        for name in ("beta", "a", "b"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"parameter array '{name}' has length "
                                 f"{len(getattr(self, name))}, expected {n}")

    @property
    def num_neurons(self) -> int:
        return len(self.alpha)

    def copy(self) -> "NeuronParams":
        return NeuronParams(self.alpha.copy(), self.beta.copy(),
                            self.a.copy(), self.b.copy())


@dataclass
class LayerState:
    """Dynamic state of one layer: membrane potential, adaptation current,
    spike indicator of the previous step."""

    u: np.ndarray
    w: np.ndarray
    s: np.ndarray

    def copy(self) -> "LayerState":
        return LayerState(self.u.copy(), self.w.copy(), self.s.copy())


def init_params(num_neurons: int, rng) -> NeuronParams:
    """Draw neuron parameters i.i.d. uniform within their boundaries.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if num_neurons <= 0:
        raise ValueError("num_neurons must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return NeuronParams(
        alpha=rng.uniform(*ALPHA_BOUNDS, size=num_neurons),
        beta=rng.uniform(*BETA_BOUNDS, size=num_neurons),
        a=rng.uniform(*A_BOUNDS, size=num_neurons),
        b=rng.uniform(*B_BOUNDS, size=num_neurons),
    )


def clip_params(params: NeuronParams) -> NeuronParams:
    """Clamp every parameter to its boundary range (idempotent)."""
    return NeuronParams(
        alpha=np.clip(params.alpha, *ALPHA_BOUNDS),
        beta=np.clip(params.beta, *BETA_BOUNDS),
        a=np.clip(params.a, *A_BOUNDS),
        b=np.clip(params.b, *B_BOUNDS),
    )


def clip_params_(params: NeuronParams) -> None:
    """In-place variant of :func:`clip_params`."""
    np.clip(params.alpha, *ALPHA_BOUNDS, out=params.alpha)
    np.clip(params.beta, *BETA_BOUNDS, out=params.beta)
    np.clip(params.a, *A_BOUNDS, out=params.a)
    np.clip(params.b, *B_BOUNDS, out=params.b)


def init_state(num_neurons: int, rng=None, mode: str = "zeros",
               batch: int | None = None) -> LayerState:
    """Initial layer state.

    mode "random_uniform": u, w ~ U[0, 1] (the training default), s = 0.
    mode "zeros": everything zero (deterministic analysis runs).
    With ``batch`` set, state arrays have shape (batch, num_neurons).
    """
    if num_neurons <= 0:
        raise ValueError("num_neurons must be positive")
    shape = (num_neurons,) if batch is None else (batch, num_neurons)
    if mode == "zeros":
        return LayerState(np.zeros(shape), np.zeros(shape), np.zeros(shape))
    if mode == "random_uniform":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return LayerState(rng.uniform(0.0, 1.0, size=shape),
                          rng.uniform(0.0, 1.0, size=shape),
                          np.zeros(shape))
    raise ValueError(f"unknown state init mode: {mode!r}")


def adlif_step(state: LayerState, params: NeuronParams, input_current,
               theta: float = DEFAULT_THETA, spike_fn=None):
    """One discrete time step of the AdLIF+ recurrence.

    State arrays may carry a leading batch dimension; parameters broadcast
    over it.  Returns ``(new_state, spikes)`` where ``spikes`` is the new
    ``state.s``.

    ``spike_fn``, if given, replaces the hard threshold with a smooth map
    u -> s (used by the differentiable gradient-check build).
    """
    input_current = np.asarray(input_current, dtype=float)
    if input_current.shape[-1] != state.u.shape[-1]:
        raise ValueError(f"input_current has {input_current.shape[-1]} neurons, "
                         f"state has {state.u.shape[-1]}")
    if input_current.shape[-1] != params.num_neurons:
        raise ValueError("params/state neuron count mismatch")
    if not np.all(np.isfinite(input_current)):
        raise ValueError("non-finite input current")

    # Both new states depend only on t-1 quantities; order is u, then w, then s.
    u = params.alpha * state.u + (1.0 - params.alpha) * (input_current - state.w) \
        - theta * state.s
    w = params.beta * state.w + (1.0 - params.beta) * params.a * state.u \
        + params.b * state.s
    if spike_fn is None:
        s = (u >= theta).astype(float)
    else:
        s = spike_fn(u)
    new_state = LayerState(u, w, s)
    return new_state, s
