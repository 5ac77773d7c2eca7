import numpy as np
import pytest

from adsnn.delay import (DelayLine, DelayMatrix, clamp_delays,
                         delay_gradient_local, delayed_activation,
                         delayed_current, delayed_current_backward)


def run_line(spike_train, delays):
    """Stream a (T, pre) spike train through a DelayLine, collecting the
    per-synapse activation at every step."""
    line = DelayLine(spike_train.shape[1], delays.d_max)
    out = []
    for t in range(len(spike_train)):
        line.push(spike_train[t])
        out.append(delayed_activation(line, delays))
    return np.array(out)


class TestDelayedActivation:
    def test_integer_shift(self):
        s = np.array([[0.0], [1.0], [0.0], [0.0]])
        d = DelayMatrix(np.array([[1.0]]), d_max=3)
        out = run_line(s, d)
        np.testing.assert_array_equal(out[:, 0, 0], [0, 0, 1, 0])

    def test_zero_delay_identity(self):
        s = np.array([[0.0], [1.0], [0.0], [0.0]])
        d = DelayMatrix(np.array([[0.0]]), d_max=3)
        out = run_line(s, d)
        np.testing.assert_array_equal(out[:, 0, 0], s[:, 0])

    def test_fractional_interpolation(self):
        s = np.array([[0.0], [1.0], [0.0], [0.0]])
        d = DelayMatrix(np.array([[0.5]]), d_max=3)
        out = run_line(s, d)
        np.testing.assert_allclose(out[:, 0, 0], [0, 0.5, 0.5, 0])

    def test_causality(self):
        # Changing future spikes must not change past activations.
        rng = np.random.default_rng(0)
        s = (rng.random((10, 3)) < 0.4).astype(float)
        d = DelayMatrix(rng.uniform(0, 4, (3, 2)), d_max=5)
        ref = run_line(s, d)
        s2 = s.copy()
        s2[7:] = 1.0 - s2[7:]
        out = run_line(s2, d)
        np.testing.assert_array_equal(out[:7], ref[:7])

    def test_out_of_range_delay_rejected(self):
        line = DelayLine(1, d_max=3)
        line.push(np.ones(1))
        with pytest.raises(ValueError):
            delayed_activation(line, DelayMatrix(np.array([[4.5]]), d_max=3))

    def test_dmax_increase_is_noop(self):
        rng = np.random.default_rng(1)
        s = (rng.random((12, 4)) < 0.3).astype(float)
        d_small = DelayMatrix(rng.uniform(0, 4.5, (4, 3)), d_max=5)
        d_big = DelayMatrix(d_small.d.copy(), d_max=11)
        np.testing.assert_array_equal(run_line(s, d_small), run_line(s, d_big))


class TestDelayGradient:
    def test_hand_example(self):
        s = np.array([[0.0], [1.0], [0.0], [0.0]])
        d = DelayMatrix(np.array([[0.5]]), d_max=3)
        line = DelayLine(1, 3)
        line.push(s[0])
        line.push(s[1])
        # t = 1: da/dd = s[0] - s[1] = -1
        assert delay_gradient_local(line, d)[0, 0] == -1.0

    def test_constant_train_zero_gradient(self):
        d = DelayMatrix(np.array([[1.3, 2.7]]), d_max=4)
        line = DelayLine(1, 4)
        for _ in range(8):
            line.push(np.ones(1))
        np.testing.assert_array_equal(delay_gradient_local(line, d), np.zeros((1, 2)))

    def test_matches_central_difference(self):
        # Analytic local gradient vs central difference of the activation.
        rng = np.random.default_rng(5)
        s = (rng.random((15, 4)) < 0.5).astype(float)
        d_vals = rng.integers(0, 5, (4, 3)) + rng.uniform(0.1, 0.9, (4, 3))
        eps = 1e-4
        line = DelayLine(4, 6)
        for t in range(len(s)):
            line.push(s[t])
        analytic = delay_gradient_local(line, DelayMatrix(d_vals, 6))
        up = delayed_activation(line, DelayMatrix(d_vals + eps, 6))
        down = delayed_activation(line, DelayMatrix(d_vals - eps, 6))
        np.testing.assert_allclose(analytic, (up - down) / (2 * eps), atol=1e-6)


class TestClamp:
    @pytest.mark.parametrize("raw,expected", [(-0.7, 0.0), (31.2, 25.0), (12.5, 12.5)])
    def test_values(self, raw, expected):
        d = clamp_delays(DelayMatrix(np.array([[raw]])))
        assert d.d[0, 0] == expected

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        d = DelayMatrix(rng.uniform(-10, 40, (5, 5)))
        once = clamp_delays(d)
        np.testing.assert_array_equal(once.d, clamp_delays(once).d)


class TestBatchedPath:
    """The whole-sequence helpers must agree with the streaming DelayLine."""

    def test_matches_streaming(self):
        rng = np.random.default_rng(11)
        pre, post, t_len = 5, 4, 20
        s = (rng.random((2, t_len, pre)) < 0.4).astype(float)
        w = rng.normal(size=(pre, post))
        bias = rng.normal(size=post)
        d = DelayMatrix(rng.uniform(0, 6, (pre, post)), d_max=7)

        out = delayed_current(s, w, d, bias)
        for b in range(2):
            line = DelayLine(pre, 7)
            for t in range(t_len):
                line.push(s[b, t])
                a = delayed_activation(line, d)
                expected = (w * a).sum(axis=0) + bias
                np.testing.assert_allclose(out[b, t], expected, atol=1e-12)

    def test_backward_weight_and_delay_grads(self):
        # Gradients of sum(g * I) vs finite differences on w and d.
        rng = np.random.default_rng(13)
        pre, post, t_len = 4, 3, 15
        s = rng.uniform(0, 1, (2, t_len, pre))
        w = rng.normal(size=(pre, post))
        bias = np.zeros(post)
        d_vals = rng.integers(0, 4, (pre, post)) + rng.uniform(0.2, 0.8, (pre, post))
        g = rng.normal(size=(2, t_len, post))

        def objective(w_, d_):
            return float((g * delayed_current(s, w_, DelayMatrix(d_, 6), bias)).sum())

        ds, dw, dd, db = delayed_current_backward(
            g, s, w, DelayMatrix(d_vals, 6))

        eps = 1e-5
        for arr, grad in ((w, dw), (d_vals, dd)):
            flat = arr.reshape(-1)
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = objective(w, d_vals)
                flat[i] = orig - eps
                down = objective(w, d_vals)
                flat[i] = orig
                fd[i] = (up - down) / (2 * eps)
            np.testing.assert_allclose(grad.reshape(-1), fd, atol=1e-6)
        np.testing.assert_allclose(db, g.sum(axis=(0, 1)))

    def test_backward_spike_grads(self):
        rng = np.random.default_rng(17)
        pre, post, t_len = 3, 2, 10
        s = rng.uniform(0, 1, (1, t_len, pre))
        w = rng.normal(size=(pre, post))
        d = DelayMatrix(rng.uniform(0.2, 3.8, (pre, post)), 5)
        g = rng.normal(size=(1, t_len, post))
        ds, _, _, _ = delayed_current_backward(g, s, w, d)
        eps = 1e-6
        fd = np.zeros_like(s)
        for t in range(t_len):
            for j in range(pre):
                s[0, t, j] += eps
                up = float((g * delayed_current(s, w, d, np.zeros(post))).sum())
                s[0, t, j] -= 2 * eps
                down = float((g * delayed_current(s, w, d, np.zeros(post))).sum())
                s[0, t, j] += eps
                fd[0, t, j] = (up - down) / (2 * eps)
        np.testing.assert_allclose(ds, fd, atol=1e-8)
