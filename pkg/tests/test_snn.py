import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import butter, filtfilt

from tdcless.snn import (
    LifParams, LifState, LmuParams, NetworkConfig, RateTables, SpikeCounters, decode_checkpoint,
    encode_checkpoint, fan_out, infer_exposure, init_network, legendre_matrices, lif_rate,
    lif_rate_from_drive, lif_step, lmu_step, rate_forward, shifted_legendre, soft_lif_rate,
    spiking_forward, to_rate_mode, to_spiking_mode,
)

SMALL = NetworkConfig(order=4, n_hidden=2, n_signal=8, n_trigger=8, theta=20.0, tau_out=5.0,
                      tau_trigger=4.0, seed=3)


# -- Legendre memory ----------------------------------------------------------------


def test_legendre_order_one_closed_form():
    a, b = legendre_matrices(1, 10.0, 0.5)
    assert a[0, 0] == pytest.approx(math.exp(-0.05), rel=1e-12)
    assert b[0, 0] == pytest.approx(1 - math.exp(-0.05), rel=1e-12)


def test_legendre_small_dt_limit():
    a, b = legendre_matrices(8, 100.0, 1e-9)
    assert np.allclose(a, np.eye(8), atol=1e-9) and np.allclose(b, 0, atol=1e-9)


def test_legendre_domain_errors():
    for args in ((0, 1.0, 1.0), (4, 0.0, 1.0), (4, 1.0, -1.0)):
        with pytest.raises(ValueError):
            legendre_matrices(*args)


def test_legendre_spectral_radius_and_finite():
    a, b = legendre_matrices(56, 3870.0, 0.5)
    assert np.all(np.isfinite(a)) and np.all(np.isfinite(b))
    assert np.abs(np.linalg.eigvals(a)).max() <= 1 + 1e-9


def delay_nrmse(fractions, d=56, theta=1000.0, dt=1.0, steps=6000, seed=0):
    """Reconstruct u(t - r theta) from the memory and compare with a ring buffer."""
    a, b = legendre_matrices(d, theta, dt)
    rng = np.random.default_rng(seed)
    u = filtfilt(*butter(4, 0.004), rng.normal(size=steps))
    u /= u.std()
    lag_max = int(theta / dt)
    ring = np.zeros(lag_max + 1)
    m = np.zeros(d)
    out = {r: ([], []) for r in fractions}
    warm = 2 * lag_max
    for t in range(steps):
        ring = np.roll(ring, 1)
        ring[0] = u[t]
        m = a @ m + b[:, 0] * u[t]
        if not np.all(np.isfinite(m)):
            raise FloatingPointError("memory state went non-finite")
        if t >= warm:
            for r in fractions:
                w = shifted_legendre(d, r)[0]
                out[r][0].append(m @ w)
                out[r][1].append(ring[int(round(r * lag_max))])
    return {r: float(np.sqrt(np.mean((np.array(p) - np.array(q)) ** 2)) / np.std(q))
            for r, (p, q) in out.items()}


def test_delay_reconstruction():
    for r, err in delay_nrmse((0.25, 0.5, 1.0)).items():
        assert err <= 0.2, (r, err)


# -- LIF -------------------------------------------------------------------------------


def _pop(n=1, gain=1.0, bias=0.0, tau_rc=20.0, tau_ref=2.0):
    return LifParams(tau_rc, tau_ref, np.full(n, gain), np.full(n, bias))


def test_lif_rate_examples():
    p = _pop()
    assert lif_rate(np.array([1.0]), p)[0] == 0.0
    assert lif_rate(np.array([1e12]), p)[0] == pytest.approx(1 / 2.0, rel=1e-6)


@given(st.lists(st.floats(-5, 50), min_size=2, max_size=20))
def test_lif_rate_monotone(js):
    js = np.sort(np.array(js))
    r = lif_rate_from_drive(js, 20.0, 2.0)
    assert np.all(np.diff(r) >= 0)


def _spike_rate(j, p, dt, steps):
    st_ = LifState.rest(np.shape(j))
    n = np.zeros(np.shape(j))
    for _ in range(steps):
        st_, s = lif_step(st_, j, p, dt)
        assert np.all(st_.voltage >= 0) and np.all(st_.voltage <= p.v_threshold)
        assert np.all(st_.refractory >= 0) and np.all(st_.refractory <= p.tau_ref)
        n += s
    return n / (steps * dt)


def test_lif_step_rate_matches_closed_form():
    p = _pop(5)
    j = np.array([1.05, 2.0, 3.0, 6.0, 30.0])
    got = _spike_rate(j, p, 0.5, 20_000)
    assert np.allclose(got, lif_rate(j, p), rtol=0.05)


def test_lif_subthreshold_and_zero_dt():
    p = _pop(3)
    assert _spike_rate(np.array([0.2, 0.9, 1.0]), p, 0.5, 2000).sum() == 0
    s = LifState(np.array([0.3, 0.5, 0.9]), np.array([0.0, 1.0, 0.0]))
    s2, spikes = lif_step(s, np.full(3, 5.0), p, 0.0)
    assert np.array_equal(s2.voltage, s.voltage) and np.array_equal(s2.refractory, s.refractory)
    assert not spikes.any()


def test_lif_param_validation():
    with pytest.raises(ValueError):
        LifParams(0.0, 1.0, np.ones(1), np.zeros(1))
    with pytest.raises(ValueError):
        LifParams(1.0, 1.0, np.zeros(1), np.zeros(1))


def test_soft_rate_derivative_and_limit():
    j = np.linspace(0.5, 4, 50)
    r, dr = soft_lif_rate(j, 2.0, 0.5, 0.05)
    h = 1e-6
    fd = (soft_lif_rate(j + h, 2.0, 0.5, 0.05)[0] - soft_lif_rate(j - h, 2.0, 0.5, 0.05)[0]) / (2 * h)
    assert np.allclose(dr, fd, rtol=1e-5, atol=1e-8)
    away = np.abs(j - 1) > 0.05  # the LIF rate is infinitely steep at rheobase
    r_small, _ = soft_lif_rate(j[away], 2.0, 0.5, 1e-4)
    assert np.allclose(r_small, lif_rate_from_drive(j[away], 2.0, 0.5), atol=2e-3)


# -- LMU step --------------------------------------------------------------------------


def _random_lmu(rng, nx=3, nh=2, d=4):
    a, b = legendre_matrices(d, 10.0, 1.0)
    return LmuParams(a, b, rng.normal(size=nx), rng.normal(size=nh), rng.normal(size=d),
                     rng.normal(size=(nh, nx)), rng.normal(size=(nh, nh)), rng.normal(size=(nh, d)))


def test_lmu_step_zero_and_projection():
    rng = np.random.default_rng(0)
    lmu = _random_lmu(rng)
    f = lambda x: lif_rate_from_drive(x, 2.0, 0.5)  # noqa: E731
    h, m = lmu_step(np.zeros(3), np.zeros(2), np.zeros(4), lmu, f)
    assert not m.any() and np.array_equal(h, f(np.zeros(2)))
    z = LmuParams(lmu.a_bar, lmu.b_bar, np.array([1.0]), np.zeros(2), np.zeros(4),
                  np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((2, 4)))
    _, m = lmu_step(np.array([0.7]), np.zeros(2), np.zeros(4), z, f)
    assert np.allclose(m, lmu.b_bar[:, 0] * 0.7)  # u_t = x_t
    with pytest.raises(ValueError):
        lmu_step(np.zeros(5), np.zeros(2), np.zeros(4), lmu, f)


def test_lmu_step_matches_straight_line_equations():
    rng = np.random.default_rng(1)
    lmu = _random_lmu(rng)
    f = np.tanh
    x, h, m = rng.normal(size=3), rng.normal(size=2), rng.normal(size=4)
    u = sum(lmu.e_x[i] * x[i] for i in range(3)) + sum(lmu.e_h[i] * h[i] for i in range(2)) \
        + sum(lmu.e_m[i] * m[i] for i in range(4))
    m_new = [sum(lmu.a_bar[i, j] * m[j] for j in range(4)) + lmu.b_bar[i, 0] * u for i in range(4)]
    pre = [sum(lmu.w_x[k, i] * x[i] for i in range(3)) + sum(lmu.w_h[k, i] * h[i] for i in range(2))
           + sum(lmu.w_m[k, i] * m_new[i] for i in range(4)) for k in range(2)]
    h2, m2 = lmu_step(x, h, m, lmu, f)
    assert np.allclose(m2, m_new, rtol=1e-12) and np.allclose(h2, np.tanh(pre), rtol=1e-12)


def test_rate_forward_equals_stepping_lmu():
    p = init_network(SMALL)
    rng = np.random.default_rng(2)
    tables = RateTables(p, n_grid=17)
    # inputs on grid points so the table interpolation is exact
    sig = tables.sig_grid[rng.integers(0, 17, (2, 30))]
    trig = tables.trig_grid[rng.integers(0, 17, (2, 30))]
    y = rate_forward(p, sig, trig, tables=tables)
    f = lambda pre: lif_rate(pre, p.hidden)  # noqa: E731
    a = math.exp(-p.dt / p.tau_out)
    for bi in range(2):
        h, m, z = np.zeros(2), np.zeros(4), 0.0
        for t in range(30):
            x = np.concatenate([lif_rate(sig[bi, t] * p.sig_enc, p.sig_pop),
                                lif_rate(trig[bi, t] * p.trig_enc, p.trig_pop)])
            h, m = lmu_step(x, h, m, p.lmu, f)
            z = a * z + (1 - a) * h @ p.dec
        assert y[bi] == pytest.approx(z + p.dec_bias, rel=1e-10, abs=1e-12)


def test_state_boundedness_over_exposure():
    p = init_network()
    rng = np.random.default_rng(3)
    sig = rng.integers(0, 17, (1, 7740)) / 16
    trig = rng.random((1, 7740))
    tr = rate_forward(p, sig, trig, keep=True, smoothing=0.05)
    assert np.all(np.isfinite(tr.m)) and np.abs(tr.m).max() < 1e6


def test_float32_fast_path():
    p = init_network()
    rng = np.random.default_rng(4)
    sig = rng.integers(0, 17, (2, 2000)) / 16
    trig = rng.random((2, 2000))
    y64 = rate_forward(p, sig, trig)
    y32 = rate_forward(p, sig, trig, dtype=np.float32)
    assert y32.dtype == np.float32
    assert np.allclose(y32, y64, rtol=4e-5, atol=4e-6)


# -- network-level ---------------------------------------------------------------------


def test_network_dimensions_and_parameter_count():
    p = init_network()
    assert p.state_variables == 60
    assert p.parameter_count() == 3505


def test_mode_round_trip_bit_exact():
    p = init_network(SMALL)
    back = to_rate_mode(to_spiking_mode(p))
    assert back.mode == "rate" and to_spiking_mode(p).mode == "spiking"
    assert encode_checkpoint(back) == encode_checkpoint(p)


def test_checkpoint_roundtrip(tmp_path):
    p = to_spiking_mode(init_network())
    blob = encode_checkpoint(p)
    q = decode_checkpoint(blob)
    assert encode_checkpoint(q) == blob and q.mode == "spiking"
    with pytest.raises(ValueError):
        decode_checkpoint(b"NOPE" + blob[4:])
    with pytest.raises(ValueError):
        decode_checkpoint(blob[:-8])


def test_steady_state_spiking_matches_rate():
    p = init_network(SMALL)
    # strong constant drive to the hidden layer through the decoder path only
    lmu = p.lmu
    p = p.with_trainable({**p.trainable(), "w_x": np.abs(lmu.w_x) * 0 + 0.02,
                          "w_m": lmu.w_m * 0, "w_h": lmu.w_h * 0, "e_m": lmu.e_m * 0,
                          "dec": np.array([0.3, 0.2]), "dec_bias": np.array([0.1])})
    sig = np.full((1, 4000), 0.5)
    trig = np.full((1, 4000), 0.5)
    yr = rate_forward(p, sig, trig)[0]
    ys, _ = spiking_forward(to_spiking_mode(p), sig, trig)
    assert abs(ys[0] - yr) <= 0.10 * abs(yr)


def test_subthreshold_modes_agree():
    p = init_network(SMALL)
    p = p.with_trainable({**p.trainable(), "w_x": p.lmu.w_x * 0, "w_m": p.lmu.w_m * 0,
                          "w_h": p.lmu.w_h * 0})
    sig = np.zeros((1, 200))
    trig = np.zeros((1, 200))
    yr = rate_forward(p, sig, trig)[0]
    ys, _ = spiking_forward(to_spiking_mode(p), sig, trig)
    assert yr == ys[0] == p.dec_bias


def test_spike_counters_match_brute_force_recount():
    p = to_spiking_mode(init_network(SMALL))
    rng = np.random.default_rng(5)
    sig = rng.integers(0, 17, (2, 300)) / 16
    trig = rng.random((2, 300))
    _, counters, hist = spiking_forward(p, sig, trig, record=True)
    nx = p.n_in
    for b in range(2):
        n_n = n_s = 0
        for ss, ts, hs in hist:
            spikes = np.concatenate([ss[b], ts[b]])
            n_n += int(spikes.sum() + hs[b].sum())
            for i in range(nx):
                out_deg = int(p.lmu.e_x[i] != 0) + int(np.count_nonzero(p.lmu.w_x[:, i]))
                n_s += int(spikes[i]) * out_deg
            for k in range(p.lmu.n_hidden):
                out_deg = int(p.lmu.e_h[k] != 0) + int(np.count_nonzero(p.lmu.w_h[:, k])) \
                    + int(p.dec[k] != 0)
                n_s += int(hs[b, k]) * out_deg
        assert counters[b] == SpikeCounters(n_n, n_s)
        assert counters[b].synaptic >= counters[b].neural


def test_infer_exposure_determinism_and_zero_input():
    p = to_spiking_mode(init_network(SMALL))
    length = 45 * 86_000
    trig = np.arange(45) * 86_000
    zero = np.zeros(length // 500)
    d1, c1 = infer_exposure(zero, trig, p, length)
    d2, c2 = infer_exposure(zero, trig, p, length)
    assert d1 == d2 and c1 == c2
    rng = np.random.default_rng(6)
    sig = rng.integers(0, 4, length // 500).astype(float)
    assert infer_exposure(sig, trig, p, length) == infer_exposure(sig, trig, p, length)


def test_fan_out_shapes():
    p = init_network(SMALL)
    fs, ft, fh = fan_out(p)
    assert fs.shape == (8,) and ft.shape == (8,) and fh.shape == (2,)
