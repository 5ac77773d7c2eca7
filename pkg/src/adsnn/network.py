"""Feed-forward SNN: 2 adaptive hidden layers, delayed synapses, memoryless readout.

The forward pass runs layer by layer over the whole sequence: the delayed
input currents of a layer are computed from the full presynaptic spike
train, then the neuron recurrence is stepped through time.  Everything the
hand-written backward pass needs is captured in a :class:`ForwardRecord`.
"""

from __future__ import annotations

import io
import os
import json
import tempfile
from dataclasses import dataclass, field

import numpy as np

from adsnn.neuron import (NeuronParams, LayerState, adlif_step, init_params,
                          init_state, DEFAULT_THETA)
from adsnn.delay import DelayMatrix, delayed_current, DEFAULT_D_MAX

CHECKPOINT_VERSION = 1


@dataclass
class SynapseSet:
    """One all-to-all connection: weights, bias, per-synapse delays."""

    weights: np.ndarray          # (pre, post)
    bias: np.ndarray             # (post,)
    delays: DelayMatrix | None   # None = undelayed connection

    @property
    def shape(self):
        return self.weights.shape


@dataclass
class NetworkConfig:
    num_inputs: int
    num_hidden: int
    num_classes: int
    num_timesteps: int = 100
    dropout: float = 0.0
    d_max: int = DEFAULT_D_MAX
    theta: float = DEFAULT_THETA
    readout_mode: str = "softmax_sum"   # or "sum_potentials"
    horizon_mode: str = "T"                 # or "T_plus_dmax"
    neuron_model: str = "adlif"             # or "lif" (a = b = 0, untrained)
    use_delays: bool = True                 # False = delays stay frozen at 0
    state_init: str = "random_uniform"      # training-time initial state
    # Gradient routing through the spike terms of the recurrence (the reset
    # -theta*s[t-1] in u and the b*s[t-1] in w); detachable for ablations.
    grad_through_reset: bool = True
    grad_through_spike_adapt: bool = True

    def __post_init__(self):
        if min(self.num_inputs, self.num_hidden, self.num_classes) <= 0:
            raise ValueError("layer sizes must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")
        if self.readout_mode not in ("softmax_sum", "sum_potentials"):
            raise ValueError(f"unknown readout_mode {self.readout_mode!r}")
        if self.horizon_mode not in ("T", "T_plus_dmax"):
            raise ValueError(f"unknown horizon_mode {self.horizon_mode!r}")
        if self.neuron_model not in ("adlif", "lif"):
            raise ValueError(f"unknown neuron_model {self.neuron_model!r}")

    @property
    def horizon(self) -> int:
        extra = self.d_max if self.horizon_mode == "T_plus_dmax" else 0
        return self.num_timesteps + extra

    def layer_sizes(self):
        return [self.num_inputs, self.num_hidden, self.num_hidden, self.num_classes]


@dataclass
class LayerRecord:
    """Per-layer tape: currents, states and spikes over the horizon."""

    current: np.ndarray        # (batch, T, n) input currents I[t]
    u: np.ndarray              # (batch, T, n) membrane potentials
    w: np.ndarray              # (batch, T, n) adaptation currents
    s: np.ndarray              # (batch, T, n) spikes
    init: LayerState           # state at t = -1
    drop_scale: np.ndarray | None  # (batch, T, n) mask/(1-p), None in eval mode

    @property
    def s_out(self) -> np.ndarray:
        """Spikes as seen by the next layer (after dropout)."""
        return self.s if self.drop_scale is None else self.s * self.drop_scale


@dataclass
class ForwardRecord:
    """Everything the backward pass needs from one forward call."""

    inputs: np.ndarray              # (batch, T, channels), padded to horizon
    hidden: list                    # [LayerRecord, LayerRecord]
    u_out: np.ndarray               # (batch, T, classes) readout potentials
    soft_spikes: float | None      # sigmoid slope if the soft build was used


def xavier_uniform(shape, rng) -> np.ndarray:
    """Xavier/Glorot uniform init for a (fan_in, fan_out) weight matrix."""
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


class SNNModel:
    """Model container: three synapse sets and two hidden neuron layers."""

    def __init__(self, config: NetworkConfig, synapses: list, neurons: list):
        if len(synapses) != 3 or len(neurons) != 2:
            raise ValueError("expected 3 synapse sets and 2 hidden layers")
        self.config = config
        self.synapses = synapses
        self.neurons = neurons

    @classmethod
    def init(cls, config: NetworkConfig, rng) -> "SNNModel":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        sizes = config.layer_sizes()
        synapses = []
        for pre, post in zip(sizes[:-1], sizes[1:]):
            synapses.append(SynapseSet(
                weights=xavier_uniform((pre, post), rng),
                bias=np.zeros(post),
                delays=DelayMatrix(np.zeros((pre, post)), config.d_max),
            ))
        neurons = [init_params(config.num_hidden, rng) for _ in range(2)]
        if config.neuron_model == "lif":
            for p in neurons:
                p.a[:] = 0.0
                p.b[:] = 0.0
        return cls(config, synapses, neurons)

    # -- forward ------------------------------------------------------------

    def forward(self, batch: np.ndarray, mode: str = "eval", rng=None,
                soft_slope: float | None = None):
        """Run the network on a (batch, T, channels) input tensor.

        Returns ``(class_scores, record, spike_counts)`` where spike_counts
        is the total spike count per hidden layer.  ``mode="train"`` enables
        dropout and the configured random state initialization (an rng is
        then required); eval mode is deterministic (zeros state, no
        dropout).  ``soft_slope`` switches to the smooth sigmoid spike used
        by the gradient-check build.
        """
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 3:
            raise ValueError("input must be (batch, time, channels)")
        cfg = self.config
        if batch.shape[2] != cfg.num_inputs:
            raise ValueError(f"input has {batch.shape[2]} channels, "
                             f"config says {cfg.num_inputs}")
        if batch.shape[1] != cfg.num_timesteps:
            raise ValueError(f"input has {batch.shape[1]} timesteps, "
                             f"config says {cfg.num_timesteps}")
        if not np.all(np.isfinite(batch)):
            raise ValueError("non-finite values in input batch")
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "train" and rng is None and (cfg.dropout > 0 or cfg.state_init != "zeros"):
            raise ValueError("train mode needs an rng")
        if rng is not None and not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)

        horizon = cfg.horizon
        if horizon > cfg.num_timesteps:
            pad = np.zeros((batch.shape[0], horizon - cfg.num_timesteps, cfg.num_inputs))
            batch = np.concatenate([batch, pad], axis=1)

        spike_fn = None
        if soft_slope is not None:
            theta = cfg.theta
            spike_fn = lambda u: 1.0 / (1.0 + np.exp(-soft_slope * (u - theta)))

        pre_signal = batch
        hidden_records = []
        for layer in range(2):
            syn = self.synapses[layer]
            current = delayed_current(pre_signal, syn.weights, syn.delays, syn.bias)
            rec = self._run_layer(current, self.neurons[layer], mode, rng, spike_fn)
            hidden_records.append(rec)
            pre_signal = rec.s_out

        syn = self.synapses[2]
        u_out = delayed_current(pre_signal, syn.weights, syn.delays, syn.bias)
        if not np.all(np.isfinite(u_out)):
            raise FloatingPointError("non-finite readout potential")

        scores = readout(u_out, cfg.readout_mode)
        record = ForwardRecord(inputs=batch, hidden=hidden_records, u_out=u_out,
                               soft_spikes=soft_slope)
        spike_counts = np.array([rec.s.sum() for rec in hidden_records])
        return scores, record, spike_counts

    def _run_layer(self, current, params, mode, rng, spike_fn) -> LayerRecord:
        cfg = self.config
        batch, horizon, n = current.shape
        if mode == "train" and cfg.state_init == "random_uniform":
            state = init_state(n, rng, "random_uniform", batch=batch)
        else:
            state = init_state(n, None, "zeros", batch=batch)
        init = state.copy()

        u = np.empty_like(current)
        w = np.empty_like(current)
        s = np.empty_like(current)
        for t in range(horizon):
            state, spikes = adlif_step(state, params, current[:, t], cfg.theta,
                                       spike_fn=spike_fn)
            u[:, t] = state.u
            w[:, t] = state.w
            s[:, t] = spikes
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
            raise FloatingPointError("non-finite membrane state in hidden layer")

        drop_scale = None
        if mode == "train" and cfg.dropout > 0.0:
            keep = 1.0 - cfg.dropout
            mask = rng.random(s.shape) < keep
            drop_scale = mask.astype(float) / keep
        return LayerRecord(current=current, u=u, w=w, s=s, init=init,
                           drop_scale=drop_scale)


def readout(u_out_trace: np.ndarray, mode: str) -> np.ndarray:
    """Collapse the readout potential trace (batch, T, classes) to scores.

    "softmax_sum": per-timestep softmax, summed over time (so the scores
    of one sample add up to T).  "sum_potentials": plain sum over time.
    """
    if mode == "sum_potentials":
        return u_out_trace.sum(axis=1)
    if mode == "softmax_sum":
        return timestep_softmax(u_out_trace).sum(axis=1)
    raise ValueError(f"unknown readout mode {mode!r}")


def timestep_softmax(u_out_trace: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the class axis, per timestep."""
    z = u_out_trace - u_out_trace.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# -- checkpoint container ----------------------------------------------------
#
# A checkpoint is a single .npz file with a fixed key layout (documented in
# the README): "version", "config_json", then per connection c in 0..2:
# "syn{c}_weights", "syn{c}_bias", "syn{c}_delays", and per hidden layer l in
# 0..1: "neuron{l}_alpha", "neuron{l}_beta", "neuron{l}_a", "neuron{l}_b".

def save_checkpoint(model: SNNModel, path: str) -> None:
    """Write a checkpoint atomically (write to temp file, then rename)."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "config_json": np.array(json.dumps(vars(model.config))),
    }
    for c, syn in enumerate(model.synapses):
        arrays[f"syn{c}_weights"] = syn.weights
        arrays[f"syn{c}_bias"] = syn.bias
        arrays[f"syn{c}_delays"] = syn.delays.d
    for l, p in enumerate(model.neurons):
        arrays[f"neuron{l}_alpha"] = p.alpha
        arrays[f"neuron{l}_beta"] = p.beta
        arrays[f"neuron{l}_a"] = p.a
        arrays[f"neuron{l}_b"] = p.b

    buf = io.BytesIO()
    np.savez(buf, **arrays)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> SNNModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = NetworkConfig(**json.loads(str(data["config_json"])))
        synapses = []
        for c in range(3):
            synapses.append(SynapseSet(
                weights=data[f"syn{c}_weights"],
                bias=data[f"syn{c}_bias"],
                delays=DelayMatrix(data[f"syn{c}_delays"], config.d_max),
            ))
        neurons = [NeuronParams(data[f"neuron{l}_alpha"], data[f"neuron{l}_beta"],
                                data[f"neuron{l}_a"], data[f"neuron{l}_b"])
                   for l in range(2)]
    return SNNModel(config, synapses, neurons)
