"""Hand-written backpropagation-through-time and the training loop.

The backward pass mirrors the forward exactly: adjoints are swept backward
through the two-state neuron recurrence (membrane potential and adaptation
current), through the spike threshold via a surrogate derivative, and
through the delayed connections via the interpolation taps.  Gradients are
checked against central finite differences in the smooth-spike build (see
adsnn.gradcheck).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from adsnn.delay import delayed_current_backward
from adsnn.network import (SNNModel, ForwardRecord, LayerRecord, readout,
                           timestep_softmax)
from adsnn.neuron import NeuronParams, clip_params_

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of -log softmax(scores)[label]."""
    value, _ = cross_entropy_with_grad(scores, labels)
    return value


def cross_entropy_with_grad(scores: np.ndarray, labels: np.ndarray):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, c = scores.shape
    if labels.shape != (n,):
        raise ValueError("labels shape mismatch")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label out of range")
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    value = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return float(value), grad


def surrogate_grad(u, theta: float, mode: str = "boxcar",
                   slope: float = 4.0):
    """Surrogate derivative of the spike threshold at membrane potential u.

    "boxcar": 0.5 where |u - theta| <= 0.5, else 0.  "soft_sigmoid": the
    exact derivative of the sigmoid spike used by the gradient-check build.
    """
    u = np.asarray(u, dtype=float)
    if mode == "boxcar":
        return np.where(np.abs(u - theta) <= 0.5, 0.5, 0.0)
    if mode == "soft_sigmoid":
        sig = 1.0 / (1.0 + np.exp(-slope * (u - theta)))
        return slope * sig * (1.0 - sig)
    raise ValueError(f"unknown surrogate mode {mode!r}")


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

@dataclass
class Gradients:
    """Gradient tensors, shapes mirroring the model parameters."""

    d_weights: list
    d_bias: list
    d_delays: list
    d_alpha: list
    d_beta: list
    d_a: list
    d_b: list

    def check_finite(self) -> None:
        for group in (self.d_weights, self.d_bias, self.d_delays,
                      self.d_alpha, self.d_beta, self.d_a, self.d_b):
            for arr in group:
                if not np.all(np.isfinite(arr)):
                    raise FloatingPointError("non-finite gradient")


def readout_backward(record: ForwardRecord, labels, mode: str):
    """Loss value and dL/du_out[t] for the chosen readout mode."""
    scores = readout(record.u_out, mode)
    value, g_scores = cross_entropy_with_grad(scores, labels)
    if mode == "sum_potentials":
        g_uout = np.broadcast_to(g_scores[:, None, :], record.u_out.shape).copy()
    else:
        q = timestep_softmax(record.u_out)
        gs = g_scores[:, None, :]
        g_uout = q * (gs - (q * gs).sum(axis=-1, keepdims=True))
    return value, g_uout


def backward(record: ForwardRecord, labels, model: SNNModel) -> Gradients:
    """Full BPTT sweep; returns gradients for every trainable tensor."""
    cfg = model.config
    loss_value, g = readout_backward(record, labels, cfg.readout_mode)

    d_weights = [None] * 3
    d_bias = [None] * 3
    d_delays = [None] * 3

    # Readout connection (memoryless output neurons: dL/dI_out = dL/du_out).
    h2 = record.hidden[1]
    ds, d_weights[2], d_delays[2], d_bias[2] = delayed_current_backward(
        g, h2.s_out, model.synapses[2].weights, model.synapses[2].delays)

    neuron_grads = []
    for layer in (1, 0):
        rec = record.hidden[layer]
        if rec.drop_scale is not None:
            ds = ds * rec.drop_scale
        d_current, ng = _layer_backward(rec, model.neurons[layer], ds, cfg,
                                        record.soft_spikes)
        neuron_grads.append(ng)
        pre = record.hidden[layer - 1].s_out if layer == 1 else record.inputs
        syn = model.synapses[layer]
        ds, d_weights[layer], d_delays[layer], d_bias[layer] = \
            delayed_current_backward(d_current, pre, syn.weights, syn.delays)
    neuron_grads.reverse()

    grads = Gradients(
        d_weights=d_weights, d_bias=d_bias, d_delays=d_delays,
        d_alpha=[ng[0] for ng in neuron_grads],
        d_beta=[ng[1] for ng in neuron_grads],
        d_a=[ng[2] for ng in neuron_grads],
        d_b=[ng[3] for ng in neuron_grads],
    )
    grads.check_finite()
    return grads


def _layer_backward(rec: LayerRecord, params: NeuronParams, ds_ext, cfg,
                    soft_slope):
    """Reverse-time sweep through one hidden layer's recurrence.

    ds_ext is dL/ds[t] arriving from the next layer (already routed through
    dropout).  Returns (dL/dI, (d_alpha, d_beta, d_a, d_b)).
    """
    alpha, beta, a, b = params.alpha, params.beta, params.a, params.b
    theta = cfg.theta
    batch, horizon, n = rec.u.shape

    if soft_slope is None:
        sg = surrogate_grad(rec.u, theta, "boxcar")
    else:
        sg = soft_slope * rec.s * (1.0 - rec.s)

    d_current = np.empty_like(rec.u)
    d_alpha = np.zeros(n)
    d_beta = np.zeros(n)
    d_a = np.zeros(n)
    d_b = np.zeros(n)

    lu_next = np.zeros((batch, n))
    lw_next = np.zeros((batch, n))
    for t in range(horizon - 1, -1, -1):
        ls = ds_ext[:, t].copy()
        if cfg.grad_through_reset:
            ls -= theta * lu_next
        if cfg.grad_through_spike_adapt:
            ls += b * lw_next
        lu = ls * sg[:, t] + alpha * lu_next + (1.0 - beta) * a * lw_next
        lw = beta * lw_next - (1.0 - alpha) * lu_next

        if t > 0:
            u_prev, w_prev, s_prev = rec.u[:, t - 1], rec.w[:, t - 1], rec.s[:, t - 1]
        else:
            u_prev, w_prev, s_prev = rec.init.u, rec.init.w, rec.init.s

        d_current[:, t] = (1.0 - alpha) * lu
        d_alpha += (lu * (u_prev - rec.current[:, t] + w_prev)).sum(axis=0)
        d_beta += (lw * (w_prev - a * u_prev)).sum(axis=0)
        d_a += (lw * (1.0 - beta) * u_prev).sum(axis=0)
        d_b += (lw * s_prev).sum(axis=0)

        lu_next, lw_next = lu, lw

    return d_current, (d_alpha, d_beta, d_a, d_b)


# ---------------------------------------------------------------------------
# Adam, scheduler
# ---------------------------------------------------------------------------

class AdamSlot:
    """Adam state for one parameter tensor (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, param: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1.0 - ADAM_BETA1 ** self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2 ** self.t)
        param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


class PlateauScheduler:
    """Multiply the learning rates by `factor` after `patience` epochs
    without improvement of the (maximized) metric."""

    def __init__(self, factor: float = 0.7, patience: int = 5):
        self.factor = factor
        self.patience = patience
        self.best = -np.inf
        self.num_bad = 0

    def step(self, metric: float) -> bool:
        """Record one epoch's metric; returns True if the lr was cut."""
        if metric > self.best:
            self.best = metric
            self.num_bad = 0
            return False
        self.num_bad += 1
        if self.num_bad > self.patience:
            self.num_bad = 0
            return True
        return False


class Optimizer:
    """Adam over all model tensors, with the delay matrices on their own
    (10x) learning rate and clipping applied after every step."""

    def __init__(self, model: SNNModel, lr_weights: float,
                 lr_delays: float | None = None,
                 train_neuron_params: bool = True):
        self.lr_weights = lr_weights
        self.lr_delays = 10.0 * lr_weights if lr_delays is None else lr_delays
        self.train_neuron_params = train_neuron_params
        self.scheduler = PlateauScheduler()
        self.slots = {}
        for c, syn in enumerate(model.synapses):
            self.slots[f"w{c}"] = AdamSlot(syn.weights.shape)
            self.slots[f"b{c}"] = AdamSlot(syn.bias.shape)
            self.slots[f"d{c}"] = AdamSlot(syn.delays.d.shape)
        for l, p in enumerate(model.neurons):
            for name in ("alpha", "beta", "a", "b"):
                self.slots[f"n{l}_{name}"] = AdamSlot(getattr(p, name).shape)

    def apply(self, model: SNNModel, grads: Gradients) -> None:
        cfg = model.config
        for c, syn in enumerate(model.synapses):
            self.slots[f"w{c}"].update(syn.weights, grads.d_weights[c], self.lr_weights)
            self.slots[f"b{c}"].update(syn.bias, grads.d_bias[c], self.lr_weights)
            if cfg.use_delays:
                self.slots[f"d{c}"].update(syn.delays.d, grads.d_delays[c],
                                           self.lr_delays)
                syn.delays.clamp_()
        if self.train_neuron_params:
            for l, p in enumerate(model.neurons):
                self.slots[f"n{l}_alpha"].update(p.alpha, grads.d_alpha[l], self.lr_weights)
                self.slots[f"n{l}_beta"].update(p.beta, grads.d_beta[l], self.lr_weights)
                if cfg.neuron_model == "adlif":
                    self.slots[f"n{l}_a"].update(p.a, grads.d_a[l], self.lr_weights)
                    self.slots[f"n{l}_b"].update(p.b, grads.d_b[l], self.lr_weights)
                clip_params_(p)
                if cfg.neuron_model == "lif":
                    p.a[:] = 0.0
                    p.b[:] = 0.0

    def scheduler_step(self, metric: float) -> bool:
        cut = self.scheduler.step(metric)
        if cut:
            self.lr_weights *= self.scheduler.factor
            self.lr_delays *= self.scheduler.factor
        return cut


# ---------------------------------------------------------------------------
# Epoch loop
# ---------------------------------------------------------------------------

def train_epoch(model: SNNModel, values: np.ndarray, labels: np.ndarray,
                optimizer: Optimizer, batch_size: int, rng,
                stop_flag=None) -> dict:
    """One epoch of shuffled mini-batch training.

    values: (N, T, C); labels: (N,).  Returns epoch metrics including the
    mean spike count per hidden neuron per sample.  ``stop_flag`` is polled
    between batches; when it returns True the epoch ends early (used for
    graceful interrupts).
    """
    n = len(values)
    if n == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    order = rng.permutation(n)

    total_loss = 0.0
    total_correct = 0
    total_spikes = 0.0
    seen = 0
    num_hidden_neurons = 2 * model.config.num_hidden
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        x, y = values[idx], labels[idx]
        scores, record, spike_counts = model.forward(x, mode="train", rng=rng)
        value, _ = cross_entropy_with_grad(scores, y)
        grads = backward(record, y, model)
        optimizer.apply(model, grads)
        total_loss += value * len(idx)
        total_correct += int((scores.argmax(axis=1) == y).sum())
        total_spikes += float(spike_counts.sum())
        seen += len(idx)
        if stop_flag is not None and stop_flag():
            break

    return {
        "loss": total_loss / seen,
        "accuracy": total_correct / seen,
        "spikes_per_neuron": total_spikes / (num_hidden_neurons * seen),
    }


def evaluate(model: SNNModel, values: np.ndarray, labels: np.ndarray,
             batch_size: int = 128) -> dict:
    """Eval-mode accuracy and loss over a dataset."""
    n = len(values)
    if n == 0:
        raise ValueError("empty dataset")
    total_loss = 0.0
    total_correct = 0
    total_spikes = 0.0
    for start in range(0, n, batch_size):
        x, y = values[start:start + batch_size], labels[start:start + batch_size]
        scores, _, spike_counts = model.forward(x, mode="eval")
        value = cross_entropy(scores, y)
        total_loss += value * len(x)
        total_correct += int((scores.argmax(axis=1) == y).sum())
        total_spikes += float(spike_counts.sum())
    return {
        "loss": total_loss / n,
        "accuracy": total_correct / n,
        "spikes_per_neuron": total_spikes / (2 * model.config.num_hidden * n),
    }
