"""Analysis suite: adaptation regime map, spike statistics, parameter exports.

The regime map sweeps the two adaptation parameters (a, b) of a single
neuron driven by a fixed stimulus and counts output spikes per grid point.
Points producing more output spikes than the stimulus contains mark the
runaway (chaotic) regime; the plain-LIF behaviour sits at a = b = 0.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from adsnn.neuron import NeuronParams, LayerState, adlif_step
from adsnn.network import SNNModel
from adsnn.training import evaluate

# Canonical single-neuron stimulus: 12 spikes, one every 8 steps from t=4,
# over 100 steps.  Leak and drive are tuned so the a=b=0 (LIF) point fires
# on every input spike, positive adaptation visibly suppresses output, and
# negative a drives the runaway regime inside the default grid.
CANONICAL_SPIKE_TIMES = tuple(range(4, 100, 8))
CANONICAL = dict(alpha=0.75, beta=0.96, input_weight=5.0, theta=1.0,
                 num_timesteps=100)


@dataclass
class RegimeMapSpec:
    a_range: tuple = (-1.0, 1.0, 81)     # (min, max, steps)
    b_range: tuple = (-0.5, 2.5, 81)
    alpha: float = CANONICAL["alpha"]
    beta: float = CANONICAL["beta"]
    input_weight: float = CANONICAL["input_weight"]
    theta: float = CANONICAL["theta"]
    num_timesteps: int = CANONICAL["num_timesteps"]
    spike_times: tuple = CANONICAL_SPIKE_TIMES

    def __post_init__(self):
        if self.a_range[2] < 2 or self.b_range[2] < 2:
            raise ValueError("ranges need at least 2 steps")
        if any(t < 0 or t >= self.num_timesteps for t in self.spike_times):
            raise ValueError("spike time outside the horizon")

    def stimulus(self) -> np.ndarray:
        stim = np.zeros(self.num_timesteps)
        stim[list(self.spike_times)] = 1.0
        return stim

    @classmethod
    def from_toml(cls, path: str) -> "RegimeMapSpec":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        known = {"a_range", "b_range", "alpha", "beta", "input_weight",
                 "theta", "num_timesteps", "spike_times"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
        for key in ("a_range", "b_range", "spike_times"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def regime_map(spec: RegimeMapSpec):
    """Output spike counts over the (a, b) grid.

    Returns (a_values, b_values, counts) with counts shaped
    (len(a_values), len(b_values)).  Every grid point simulates one neuron
    from a zeroed state on the spec's stimulus.
    """
    a_values = np.linspace(*spec.a_range[:2], int(spec.a_range[2]))
    b_values = np.linspace(*spec.b_range[:2], int(spec.b_range[2]))
    aa, bb = np.meshgrid(a_values, b_values, indexing="ij")
    n = aa.size
    params = NeuronParams(
        alpha=np.full(n, spec.alpha), beta=np.full(n, spec.beta),
        a=aa.ravel().copy(), b=bb.ravel().copy(),
    )
    state = LayerState(np.zeros(n), np.zeros(n), np.zeros(n))
    stim = spec.stimulus()
    counts = np.zeros(n)
    for t in range(spec.num_timesteps):
        drive = np.full(n, spec.input_weight * stim[t])
        state, spikes = adlif_step(state, params, drive, spec.theta)
        counts += spikes
    return a_values, b_values, counts.reshape(aa.shape)


def write_regime_csv(path: str, a_values, b_values, counts) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "count"])
        for i, a in enumerate(a_values):
            for j, b in enumerate(b_values):
                writer.writerow([f"{a:.6g}", f"{b:.6g}", int(counts[i, j])])


# ---------------------------------------------------------------------------
# Spike statistics
# ---------------------------------------------------------------------------

@dataclass
class SpikeStats:
    total_spikes: list          # per hidden layer
    num_neurons: int            # per hidden layer
    num_samples: int
    num_timesteps: int

    @property
    def spikes_per_neuron(self) -> list:
        """Average spikes per neuron over one sample, per layer."""
        return [t / (self.num_neurons * self.num_samples) for t in self.total_spikes]

    @property
    def spikes_per_neuron_overall(self) -> float:
        return sum(self.total_spikes) / (2 * self.num_neurons * self.num_samples)


def spike_stats(model: SNNModel, values: np.ndarray,
                batch_size: int = 128) -> SpikeStats:
    """Eval-mode spike totals per hidden layer over a dataset."""
    totals = np.zeros(2)
    for start in range(0, len(values), batch_size):
        _, _, counts = model.forward(values[start:start + batch_size], mode="eval")
        totals += counts
    return SpikeStats(total_spikes=list(totals),
                      num_neurons=model.config.num_hidden,
                      num_samples=len(values),
                      num_timesteps=model.config.num_timesteps)


def write_spike_stats_csv(path: str, stats: SpikeStats) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "total_spikes", "neurons", "samples",
                         "spikes_per_neuron"])
        for i, (total, per) in enumerate(zip(stats.total_spikes,
                                             stats.spikes_per_neuron)):
            writer.writerow([f"hidden{i + 1}", int(total), stats.num_neurons,
                             stats.num_samples, f"{per:.4f}"])


# ---------------------------------------------------------------------------
# Parameter distribution exports
# ---------------------------------------------------------------------------

def export_distributions(model: SNNModel, out_dir: str) -> list:
    """Write one CSV per trained parameter per layer; returns the paths.

    Neuron parameters: neuron<l>_{alpha,beta,a,b}.csv (one value per
    neuron).  Delays: delays_<name>.csv (one value per synapse) for the
    input->hidden1, hidden1->hidden2 and hidden2->output connections.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for l, p in enumerate(model.neurons):
        for name in ("alpha", "beta", "a", "b"):
            path = os.path.join(out_dir, f"neuron{l + 1}_{name}.csv")
            _write_column(path, name, getattr(p, name))
            paths.append(path)
    conn_names = ("input_hidden1", "hidden1_hidden2", "hidden2_output")
    for syn, conn in zip(model.synapses, conn_names):
        path = os.path.join(out_dir, f"delays_{conn}.csv")
        _write_column(path, "delay", syn.delays.d.ravel())
        paths.append(path)
    return paths


def _write_column(path: str, header: str, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([header])
        for v in np.asarray(values).ravel():
            writer.writerow([repr(float(v))])
