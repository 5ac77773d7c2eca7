"""Synthetic spike-train tasks for verification experiments and fixtures.

Two families:

* lag task — the class is the inter-spike lag between two input channels;
  solvable by a coincidence detector once the faster channel is delayed by
  the right amount, which makes it a designed probe for delay learning.
* offset-code task — all classes use the same channels with the same
  overall activity; classes differ only in which channel fires at which
  relative offset within a repeated motif, so spatial (per-timestep) cues
  carry no information and temporal mechanisms must be used.
"""

from __future__ import annotations

import numpy as np

from adsnn.data import EventFile, EventRecord


def make_lag_task(num_samples: int, seed, lags=(0, 5, 10, 15),
                  num_timesteps: int = 60, pairs_per_sample: int = 3,
                  amplitude: float = 4.0, amplitude_jitter: float = 0.0):
    """Class c: channel 1 fires lags[c] steps after channel 0.

    Each sample plants `pairs_per_sample` such pairs at random onsets.
    With only two input channels, Xavier-initialized weights are far too
    small for unit events to drive anything, so events carry a larger
    amplitude (they model binned multi-spike counts).
    Returns (values (N, T, 2), labels (N,)).
    """
    rng = np.random.default_rng(seed)
    values = np.zeros((num_samples, num_timesteps, 2))
    labels = rng.integers(0, len(lags), size=num_samples)
    for i in range(num_samples):
        lag = lags[labels[i]]
        # Wrap-around keeps the marginal event-time distribution identical
        # for every class, so absolute time carries no class information.
        onsets = rng.integers(0, num_timesteps, size=pairs_per_sample)
        for t0 in onsets:
            scale = 1.0 + amplitude_jitter * rng.uniform(-1.0, 1.0)
            values[i, t0, 0] = amplitude * scale
            values[i, (t0 + lag) % num_timesteps, 1] = amplitude * scale
    return values, labels


def make_offset_code_task(num_samples: int, seed, num_classes: int = 10,
                          num_channels: int = 20, num_timesteps: int = 60,
                          max_offset: int = 10, repeats: int = 3,
                          time_jitter: int = 1, drop_prob: float = 0.1,
                          noise_events: int = 4):
    """Planted temporal code: per class, a permutation assigns each channel
    a firing offset within a repeated motif.

    The offset multiset is identical for every class (a balanced spread over
    [0, max_offset]), so both the per-channel firing rates and the
    per-timestep coincidence histogram match across classes; only the
    channel-to-offset assignment differs.  Samples repeat the motif at
    random onsets with per-event time jitter, dropped events and background
    noise.

    Returns (values (N, T, C), labels (N,)).
    """
    rng = np.random.default_rng(seed)
    base_offsets = np.linspace(0, max_offset, num_channels).round().astype(int)
    class_offsets = np.stack([rng.permutation(base_offsets)
                              for _ in range(num_classes)])

    values = np.zeros((num_samples, num_timesteps, num_channels))
    labels = rng.integers(0, num_classes, size=num_samples)
    motif_span = max_offset + time_jitter + 1
    for i in range(num_samples):
        offsets = class_offsets[labels[i]]
        onsets = rng.integers(0, num_timesteps - motif_span, size=repeats)
        for t0 in onsets:
            for ch in range(num_channels):
                if rng.random() < drop_prob:
                    continue
                t = t0 + offsets[ch] + rng.integers(-time_jitter, time_jitter + 1)
                values[i, np.clip(t, 0, num_timesteps - 1), ch] += 1.0
        for _ in range(noise_events):
            values[i, rng.integers(0, num_timesteps),
                   rng.integers(0, num_channels)] += 1.0
    return values, labels


def make_event_fixture(num_samples: int, seed, num_classes: int = 20,
                       raw_channels: int = 700, duration: float = 1.0,
                       events_per_sample: int = 60) -> EventFile:
    """Random event-file fixture in the raw (unbinned) interchange format.

    Each class gets a loose template of (channel, time) centers; samples
    scatter events around their class template.  Intended for format and
    overfit tests, not for meaningful generalization.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.05, duration - 0.05,
                          size=(num_classes, events_per_sample))
    channels = rng.integers(0, raw_channels, size=(num_classes, events_per_sample))
    records = []
    for i in range(num_samples):
        label = i % num_classes
        for c0, t0 in zip(channels[label], centers[label]):
            ch = int(np.clip(c0 + rng.integers(-10, 11), 0, raw_channels - 1))
            t = float(np.clip(t0 + rng.normal(0, 0.01), 0.0, duration - 1e-6))
            records.append(EventRecord(i, label, ch, t))
    return EventFile(raw_channels, num_classes, records)
