import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from parabolic_cl.bridge import BridgePath, BridgeSpec
from parabolic_cl.buffer import ReservoirBuffer, Sample, maybe_insert
from parabolic_cl.errors import ParameterError, TrainingError
from parabolic_cl.loss import (
    LOG_WEIGHT_CLAMP,
    DriftDescriptor,
    PclConfig,
    girsanov_log_weights,
    girsanov_weight,
    pcl_loss,
    time_weights,
)
from parabolic_cl.net import backward, forward, init_network, soft_cross_entropy


def _data(rng, n=6, d=4, c=3):
    X = rng.normal(size=(n, d))
    Y = np.eye(c)[rng.integers(c, size=n)]
    return X, Y


def _buffer(rng, m=5, d=4, c=3):
    buf = ReservoirBuffer(m)
    for i in range(m):
        maybe_insert(buf, Sample(rng.normal(size=d), np.eye(c)[i % c], 0, i), rng)
    return buf


def test_config_validation():
    with pytest.raises(ParameterError):
        PclConfig(buffer_batch=-1)
    with pytest.raises(ParameterError):
        PclConfig(n_paths=0)
    with pytest.raises(ParameterError):
        PclConfig(pairing="nearest")
    with pytest.raises(ParameterError):
        DriftDescriptor("gaussian_prior", (0.0,), 0.0)


def test_time_weights():
    spec = BridgeSpec(k=4)
    assert_allclose(time_weights(spec, True), [0.25, 0.25, 0.25, 0.25, 1.0])
    assert_allclose(time_weights(spec, False), [0.25, 0.25, 0.25, 0.25, 0.0])


def test_degenerate_bridge_is_twice_batch_loss(rng):
    net = init_network([4, 8, 3], rng)
    X, Y = _data(rng)
    cfg = PclConfig(bridge=BridgeSpec(k=1, sigma_x=0.0, sigma_y=0.0), pairing="identity")
    loss, grads = pcl_loss(net, X, Y, ReservoirBuffer(10), cfg, rng)
    logits, cache = forward(net, X)
    ref, g = soft_cross_entropy(logits, Y)
    ref_grads, _ = backward(net, cache, g)
    assert loss == pytest.approx(2 * ref, rel=1e-12)
    for (a, b), (c, d) in zip(grads, ref_grads):
        assert_allclose(a, 2 * c, rtol=1e-10, atol=1e-14)
        assert_allclose(b, 2 * d, rtol=1e-10, atol=1e-14)


def test_quadrature_oracle(rng):
    net = init_network([3, 6, 2], rng)
    X = np.array([[0.0, 0.5, -1.0], [1.5, -0.5, 2.0]])
    Y = np.array([[1.0, 0.0], [0.0, 1.0]])
    cfg = PclConfig(bridge=BridgeSpec(k=4000, sigma_x=0.0, sigma_y=0.0),
                    pairing="euclidean_sorted", include_endpoints=False)
    loss, _ = pcl_loss(net, X, Y, None, cfg, rng)

    def g(t, a, b):
        x = (1 - t) * X[a] + t * X[b]
        y = (1 - t) * Y[a] + t * Y[b]
        return soft_cross_entropy(forward(net, x[None])[0], y[None])[0]

    ref = 0.5 * (integrate.quad(g, 0, 1, args=(0, 1))[0] + integrate.quad(g, 0, 1, args=(1, 0))[0])
    assert abs(loss - ref) / ref < 1e-3


def _fd_check(cfg, seed, with_buffer):
    r = np.random.default_rng(seed)
    net = init_network([4, 7, 3], r)
    for layer in net.layers:
        layer.bias[:] = r.normal(scale=0.1, size=layer.bias.shape)
    X, Y = _data(r)
    buf = _buffer(r) if with_buffer else None

    def evaluate():
        return pcl_loss(net, X, Y, buf, cfg, np.random.default_rng(99), np.random.default_rng(98))

    _, grads = evaluate()
    h = 1e-5
    worst = 0.0
    for layer, (dW, db) in zip(net.layers, grads):
        for arr, an in ((layer.weights, dW), (layer.bias, db)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                old = arr[i]
                arr[i] = old + h
                fp = evaluate()[0]
                arr[i] = old - h
                fm = evaluate()[0]
                arr[i] = old
                fd = (fp - fm) / (2 * h)
                worst = max(worst, abs(fd - an[i]) / max(abs(fd), abs(an[i]), 1e-3))
    return worst


@pytest.mark.parametrize("cfg,with_buffer", [
    (PclConfig(bridge=BridgeSpec(k=4, sigma_x=0.3, sigma_y=0.1), buffer_batch=3), True),
    (PclConfig(bridge=BridgeSpec(k=3, sigma_x=0.5, sigma_y=0.2), n_paths=2,
               pairing="euclidean_sorted", include_endpoints=False), False),
    (PclConfig(bridge=BridgeSpec(k=4, sigma_x=0.3, sigma_y=0.1),
               drift=DriftDescriptor("gaussian_prior", (0.0,) * 4, 2.0)), True),
])
def test_pcl_gradient_matches_finite_differences(cfg, with_buffer):
    assert _fd_check(cfg, 0, with_buffer) < 1e-5


def test_empty_buffer_uses_raw_batch(rng):
    net = init_network([4, 5, 3], rng)
    X, Y = _data(rng)
    cfg = PclConfig()
    a = pcl_loss(net, X, Y, ReservoirBuffer(4), cfg, np.random.default_rng(1))[0]
    b = pcl_loss(net, X, Y, None, cfg, np.random.default_rng(1))[0]
    assert a == b


def test_non_finite_loss_raises(rng):
    net = init_network([4, 5, 3], rng)
    net.layers[0].weights[:] = np.nan
    X, Y = _data(rng)
    with pytest.raises(TrainingError):
        pcl_loss(net, X, Y, None, PclConfig(), rng)


@given(st.integers(0, 10_000), st.floats(0, 2), st.integers(1, 6))
def test_loss_nonnegative_when_labels_stay_on_simplex(seed, sigma_x, k):
    r = np.random.default_rng(seed)
    net = init_network([4, 5, 3], r)
    X, Y = _data(r)
    cfg = PclConfig(bridge=BridgeSpec(k=k, sigma_x=sigma_x, sigma_y=0.0))
    assert pcl_loss(net, X, Y, _buffer(r), cfg, r)[0] >= 0


def test_variance_halves_with_paths():
    r = np.random.default_rng(0)
    net = init_network([4, 8, 3], r)
    X, Y = _data(r, n=4)
    paths = [8, 16, 32, 64, 128, 256, 512]
    variances = []
    for P in paths:
        cfg = PclConfig(bridge=BridgeSpec(k=4, sigma_x=1.0, sigma_y=0.2), n_paths=P,
                        pairing="euclidean_sorted")
        vals = [pcl_loss(net, X, Y, None, cfg, np.random.default_rng([P, rep]))[0] for rep in range(150)]
        variances.append(np.var(vals, ddof=1))
    slope = np.polyfit(np.log(paths), np.log(variances), 1)[0]
    assert abs(slope + 1) < 0.15


def test_weight_is_one_without_drift(rng):
    xs = rng.normal(size=(6, 2))
    times = np.linspace(0, 1, 6)
    assert girsanov_log_weights(xs, times, DriftDescriptor()) == 0.0
    with pytest.raises(ParameterError):
        girsanov_weight(BridgePath(times, xs, xs), DriftDescriptor())


def test_constant_path_weight(rng):
    drift = DriftDescriptor("gaussian_prior", (1.0, -1.0), 0.5)
    x = np.array([0.3, 0.2])
    times = np.linspace(0, 2.0, 9)
    xs = np.repeat(x[None], 9, axis=0)
    w = girsanov_weight(BridgePath(times, xs, xs), drift)
    mu = drift.mu(x)
    assert w == pytest.approx(np.exp(-0.5 * mu @ mu * 2.0), rel=1e-12)


def test_weight_clamp_is_flagged():
    drift = DriftDescriptor("gaussian_prior", (0.0,), 0.1)
    times = np.array([0.0, 1.0])
    xs = np.array([[10.0], [1000.0]])  # mu dx = 1000 * 990
    diag = {}
    w = girsanov_weight(BridgePath(times, xs, xs), drift, diag)
    assert w == pytest.approx(np.exp(LOG_WEIGHT_CLAMP))
    assert diag["girsanov_clamped"] == 1


def test_weight_mean_is_one_under_reference_paths():
    # driftless unit-diffusion reference paths; mu is bounded on the range they visit
    r = np.random.default_rng(3)
    n, k, T = 10_000, 50, 1.0
    dt = T / k
    inc = np.sqrt(dt) * r.standard_normal((n, k, 1))
    xs = np.concatenate([np.zeros((n, 1, 1)), np.cumsum(inc, axis=1)], axis=1)
    drift = DriftDescriptor("gaussian_prior", (0.5,), 2.0)
    w = np.exp(girsanov_log_weights(xs, np.linspace(0, T, k + 1), drift))
    se = w.std(ddof=1) / np.sqrt(n)
    assert abs(w.mean() - 1) < 3 * se


def test_drift_weights_recorded_only_on_clamp(rng):
    net = init_network([4, 5, 3], rng)
    X, Y = _data(rng)
    cfg = PclConfig(drift=DriftDescriptor("gaussian_prior", (0.0,) * 4, 1.0))
    diag = {}
    loss, _ = pcl_loss(net, X, Y, None, cfg, rng, diagnostics=diag)
    assert np.isfinite(loss)
    assert "girsanov_clamped" not in diag
