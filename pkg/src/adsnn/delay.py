"""Per-synapse spike transmission delays.

Delays are real-valued and realized with linear interpolation between the
two neighbouring integer shifts: with k = floor(d) and f = d - k,

    a_ji[t] = (1 - f) * s_j[t - k] + f * s_j[t - k - 1]

so an integer delay is an exact shift and d = 0 is the identity.  The local
derivative with respect to the delay is exact for this forward model:

    da_ji[t]/dd_ji = s_j[t - k - 1] - s_j[t - k]

i.e. a backward time difference of the delayed presynaptic signal.

Two access paths are provided: a streaming :class:`DelayLine` (ring buffer,
one write per timestep, per-synapse reads) and batched whole-sequence
helpers used by the network forward/backward, which group synapses by their
integer shift so each group is a dense matmul.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_D_MAX = 25


@dataclass
class DelayMatrix:
    """Dense per-synapse delays for one connection, shape (pre, post)."""

    d: np.ndarray
    d_max: int = DEFAULT_D_MAX

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        if self.d.ndim != 2:
            raise ValueError("delay matrix must be 2-D (pre, post)")

    def clamp(self) -> "DelayMatrix":
        """Elementwise clamp to [0, d_max] (idempotent)."""
        return DelayMatrix(np.clip(self.d, 0.0, float(self.d_max)), self.d_max)

    def clamp_(self) -> None:
        np.clip(self.d, 0.0, float(self.d_max), out=self.d)

    def check_in_range(self) -> None:
        if self.d.min() < 0.0 or self.d.max() > self.d_max:
            raise ValueError(f"delays outside [0, {self.d_max}]; clamp first")


def clamp_delays(delays: DelayMatrix) -> DelayMatrix:
    return delays.clamp()


class DelayLine:
    """Ring buffer over the last d_max + 1 presynaptic spike vectors.

    One write per timestep via :meth:`push`; :meth:`read` returns the spike
    vector from ``lag`` steps before the most recent push.  Reads that reach
    before the start of the stream return zeros (zero left-padding).
    """

    def __init__(self, num_pre: int, d_max: int = DEFAULT_D_MAX):
        if num_pre <= 0:
            raise ValueError("num_pre must be positive")
        # +2 so lag d_max + 1 (the second interpolation tap of a delay of
        # exactly d_max) is still resolvable.
        self.depth = d_max + 2
        self.d_max = d_max
        self.num_pre = num_pre
        self._buf = np.zeros((self.depth, num_pre))
        self._head = -1   # slot of the most recent push
        self._count = 0   # number of pushes so far

    def push(self, spikes: np.ndarray) -> None:
        spikes = np.asarray(spikes, dtype=float)
        if spikes.shape != (self.num_pre,):
            raise ValueError(f"expected spike vector of shape ({self.num_pre},)")
        self._head = (self._head + 1) % self.depth
        self._buf[self._head] = spikes
        self._count += 1

    def read(self, lag: int) -> np.ndarray:
        """Spike vector ``lag`` steps back; zeros before stream start."""
        if lag < 0 or lag >= self.depth:
            raise ValueError(f"lag {lag} outside [0, {self.depth - 1}]")
        if lag >= self._count:
            return np.zeros(self.num_pre)
        return self._buf[(self._head - lag) % self.depth]


def delayed_activation(line: DelayLine, delays: DelayMatrix) -> np.ndarray:
    """Per-synapse delayed presynaptic activation at the line's current time.

    Returns shape (pre, post): a_ji = (1-f) s_j[t-k] + f s_j[t-k-1].
    """
    delays.check_in_range()
    k = np.floor(delays.d).astype(int)
    f = delays.d - k
    a = np.empty_like(delays.d)
    for lag in np.unique(k):
        mask = k == lag
        s0 = line.read(int(lag))        # s[t - k]
        s1 = line.read(int(lag) + 1)    # s[t - k - 1]
        vals = (1.0 - f) * s0[:, None] + f * s1[:, None]
        a[mask] = vals[mask]
    return a


def delay_gradient_local(line: DelayLine, delays: DelayMatrix) -> np.ndarray:
    """Exact derivative of :func:`delayed_activation` w.r.t. each delay.

    Returns shape (pre, post): da/dd = s_j[t-k-1] - s_j[t-k].
    """
    delays.check_in_range()
    k = np.floor(delays.d).astype(int)
    g = np.empty_like(delays.d)
    for lag in np.unique(k):
        mask = k == lag
        diff = line.read(int(lag) + 1) - line.read(int(lag))
        g[mask] = np.broadcast_to(diff[:, None], delays.d.shape)[mask]
    return g


# ---------------------------------------------------------------------------
# Batched whole-sequence path (grouped by integer shift)
# ---------------------------------------------------------------------------

@dataclass
class _TapGroup:
    k: int                 # integer shift of the group
    w0: np.ndarray         # F * (1 - f) masked to the group
    w1: np.ndarray | None  # F * f masked to the group; None if f == 0 everywhere


def build_tap_groups(weights: np.ndarray, delays: DelayMatrix) -> list[_TapGroup]:
    """Split the weighted connection into integer-shift tap groups.

    For all-zero delays this yields a single group with w0 == weights and no
    second tap, so the delayed path is bitwise identical to a plain matmul.
    """
    delays.check_in_range()
    k = np.floor(delays.d).astype(int)
    f = delays.d - k
    groups = []
    for lag in np.unique(k):
        mask = k == lag
        w0 = np.where(mask, weights * (1.0 - f), 0.0)
        has_frac = np.any(f[mask] != 0.0)
        w1 = np.where(mask, weights * f, 0.0) if has_frac else None
        groups.append(_TapGroup(int(lag), w0, w1))
    return groups


def shift_time(x: np.ndarray, k: int) -> np.ndarray:
    """out[:, t] = x[:, t - k] with zero left-padding; x is (batch, T, n)."""
    if k == 0:
        return x
    out = np.zeros_like(x)
    out[:, k:] = x[:, :-k]
    return out


def shift_time_back(x: np.ndarray, k: int) -> np.ndarray:
    """out[:, t] = x[:, t + k] with zero right-padding (adjoint of shift_time)."""
    if k == 0:
        return x
    out = np.zeros_like(x)
    out[:, :-k] = x[:, k:]
    return out


def delayed_current(spikes: np.ndarray, weights: np.ndarray,
                    delays: DelayMatrix, bias: np.ndarray) -> np.ndarray:
    """Input currents of a delayed connection over a whole sequence.

    spikes: (batch, T, pre); returns (batch, T, post) with
    I_i[t] = sum_j F_ji a_ji[t] + bias_i.
    """
    groups = build_tap_groups(weights, delays)
    out = np.broadcast_to(bias, spikes.shape[:2] + (weights.shape[1],)).copy()
    for g in groups:
        out += shift_time(spikes, g.k) @ g.w0
        if g.w1 is not None:
            out += shift_time(spikes, g.k + 1) @ g.w1
    return out


def delayed_current_backward(grad_current: np.ndarray, spikes: np.ndarray,
                             weights: np.ndarray, delays: DelayMatrix):
    """Adjoints of :func:`delayed_current`.

    grad_current: (batch, T, post) = dL/dI.  Returns
    (grad_spikes, grad_weights, grad_delays, grad_bias).

    Weight and delay gradients are assembled from the shift-correlation
    matrices C_k[j, i] = sum_{b,t} s_bj[t-k] g_bi[t]:

        dF_ji = (1 - f) C_k + f C_{k+1}
        dd_ji = F_ji (C_{k+1} - C_k)
    """
    k = np.floor(delays.d).astype(int)
    f = delays.d - k
    groups = build_tap_groups(weights, delays)

    grad_spikes = np.zeros_like(spikes)
    for g in groups:
        grad_spikes += shift_time_back(grad_current, g.k) @ g.w0.T
        if g.w1 is not None:
            grad_spikes += shift_time_back(grad_current, g.k + 1) @ g.w1.T

    # Correlations for every shift that appears as either tap.
    lags = sorted({int(l) for l in np.unique(k)} | {int(l) + 1 for l in np.unique(k)})
    corr = {}
    bt = (-1, spikes.shape[2])
    for lag in lags:
        corr[lag] = shift_time(spikes, lag).reshape(bt).T @ grad_current.reshape(-1, grad_current.shape[2])

    c0 = np.empty_like(delays.d)
    c1 = np.empty_like(delays.d)
    for lag in np.unique(k):
        mask = k == lag
        c0[mask] = corr[int(lag)][mask]
        c1[mask] = corr[int(lag) + 1][mask]

    grad_weights = (1.0 - f) * c0 + f * c1
    grad_delays = weights * (c1 - c0)
    grad_bias = grad_current.sum(axis=(0, 1))
    return grad_spikes, grad_weights, grad_delays, grad_bias
