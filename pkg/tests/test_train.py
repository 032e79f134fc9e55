import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdcless.config import OpticalConfig, SceneInstance, SensorConfig
from tdcless.dataset import DatasetSpec, generate_dataset, Dataset
from tdcless.events import simulate_exposure
from tdcless.histogram import accumulate_histogram, com_depth
from tdcless.snn import NetworkConfig, RateTables, encode_checkpoint, init_network
from tdcless.train import (
    AdamConfig, DivergenceError, TrainConfig, adam_step, batch_inputs, evaluate, logcosh,
    logcosh_loss, loss_and_grad, summarize, train,
)

TINY = NetworkConfig(order=4, n_hidden=2, n_signal=6, n_trigger=6, theta=10.0, tau_out=3.0,
                     tau_trigger=4.0, seed=1)


def test_logcosh_examples():
    assert logcosh_loss(0.0, 0.0) == 0.0
    assert logcosh_loss(3.0, 1.0) == logcosh_loss(1.0, 3.0)
    assert logcosh(10.0) == pytest.approx(10 - math.log(2), abs=1e-8)
    assert np.isfinite(logcosh(1e6)) and logcosh(1e6) == pytest.approx(1e6 - math.log(2))


@given(st.floats(-3, 3))
def test_logcosh_lower_bound_and_nonnegative(e):
    v = logcosh(e)
    assert v >= 0
    assert v >= e * e / 2 - e ** 4 / 12 - 1e-12


def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    mom = {"w": (np.array([0.5, 0.5]), np.array([0.1, 0.1]))}
    _, m2 = adam_step(p, {"w": np.zeros(2)}, mom, 3, AdamConfig())
    new0, m0 = adam_step(p, {"w": np.zeros(2)}, {}, 1, AdamConfig())
    assert np.array_equal(new0["w"], p["w"])
    assert np.allclose(m2["w"][0], 0.9 * 0.5) and np.allclose(m2["w"][1], 0.999 * 0.1)


def test_adam_first_step_scalar():
    cfg = AdamConfig(lr=0.001)
    new, _ = adam_step({"x": np.array(0.0)}, {"x": np.array(1.0)}, {}, 1, cfg)
    assert float(new["x"]) == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)


def _adam_scalar(p, g, m, v, t, c):
    m = c.beta1 * m + (1 - c.beta1) * g
    v = c.beta2 * v + (1 - c.beta2) * g * g
    mh = m / (1 - c.beta1 ** t)
    vh = v / (1 - c.beta2 ** t)
    return p - c.lr * mh / (math.sqrt(vh) + c.eps), m, v


def test_adam_vectorised_matches_scalar_loop():
    rng = np.random.default_rng(0)
    cfg = AdamConfig(lr=0.01)
    p = {"w": rng.normal(size=(3, 4))}
    ref = {ij: (float(p["w"][ij]), 0.0, 0.0) for ij in np.ndindex(3, 4)}
    mom = {}
    for t in range(1, 6):
        g = rng.normal(size=(3, 4))
        p, mom = adam_step(p, {"w": g}, mom, t, cfg)
        ref = {ij: _adam_scalar(ref[ij][0], g[ij], ref[ij][1], ref[ij][2], t, cfg) for ij in ref}
    want = np.array([ref[ij][0] for ij in np.ndindex(3, 4)]).reshape(3, 4)
    assert np.allclose(p["w"], want, rtol=0, atol=1e-12)


def test_adam_contract_violations():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, {}, 1, AdamConfig())
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(2)}, {}, 0, AdamConfig())
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)


def gradient_check(seed=3, steps=20, eps=1e-6):
    """Worst relative error of the BPTT gradient against central differences."""
    p = init_network(TINY)
    rng = np.random.default_rng(seed)
    p = p.with_trainable({**p.trainable(), "e_m": rng.normal(0, 0.5, 4)})
    sig = rng.integers(0, 17, (3, steps)) / 16
    trig = rng.random((3, steps)) * 1.1
    target = rng.random(3)
    tables = RateTables(p)
    _, grads, _ = loss_and_grad(p, sig, trig, target, tables, 0.3)
    theta = p.trainable()
    worst = 0.0
    for k, v in theta.items():
        for i in np.ndindex(v.shape):
            plus = {kk: vv.copy() for kk, vv in theta.items()}
            minus = {kk: vv.copy() for kk, vv in theta.items()}
            plus[k][i] += eps
            minus[k][i] -= eps
            fd = (loss_and_grad(p.with_trainable(plus), sig, trig, target, tables, 0.3)[0]
                  - loss_and_grad(p.with_trainable(minus), sig, trig, target, tables, 0.3)[0]) / (2 * eps)
            scale = max(abs(fd), abs(grads[k][i]), 1e-6)
            worst = max(worst, abs(fd - grads[k][i]) / scale)
    return worst


def test_gradient_matches_finite_differences():
    assert gradient_check() <= 1e-4


def _records(n, seed=0):
    spec = DatasetSpec(mode="train", count=max(n, 2), validation=0)
    from tdcless.dataset import exposure_seed, scene_for
    return [simulate_exposure(OpticalConfig(), SensorConfig(), scene_for(spec, seed, i),
                              exposure_seed(seed, i)) for i in range(n)]


def test_one_step_reduces_loss():
    p = init_network()
    data = batch_inputs(p, _records(10))
    cfg = TrainConfig(adam=AdamConfig(lr=3e-3), batch_size=10, epochs=1)
    before, _, _ = loss_and_grad(p, *data)
    res = train(p, data, None, cfg)
    after, _, _ = loss_and_grad(res.params, *data)
    assert after < before


def test_training_is_deterministic(tmp_path):
    p = init_network()
    data = batch_inputs(p, _records(6))
    cfg = TrainConfig(batch_size=3, epochs=2, seed=5)
    a = train(p, data, data, cfg, log_path=tmp_path / "log.csv")
    b = train(p, data, data, cfg)
    assert encode_checkpoint(a.params) == encode_checkpoint(b.params)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,train_loss,val_mae,wall_time") and len(lines) == 3


def test_divergence_aborts():
    p = init_network(TINY)
    target = np.array([0.1, np.nan])
    with pytest.raises(DivergenceError):
        train(p, (np.zeros((2, 10)), np.zeros((2, 10)), target), None,
              TrainConfig(batch_size=2, epochs=1))


def test_report_perfect_and_constant_predictors():
    depths = [0.5 * k for k in range(1, 21)]
    perfect = summarize([("s", i, d, d, None, None) for i, d in enumerate(depths)])
    assert perfect.mae == 0.0 and perfect.within == 1.0
    # every constant in [5.0, 5.5] is optimal on this grid: mean |d - c| = 2.5 m
    const = summarize([("s", i, d, 5.25, None, None) for i, d in enumerate(depths)])
    assert const.mae == pytest.approx(2.5, abs=1e-12)
    worse = summarize([("s", i, d, 7.0, None, None) for i, d in enumerate(depths)])
    assert worse.mae > const.mae


def test_com_through_reporter_matches_histogram_module(tmp_path):
    generate_dataset(DatasetSpec(mode="test", per_depth=1, reflectivity=0.7, ambient=1.0,
                                 depths=(1.0, 4.0, 7.5)), 3, tmp_path)
    ds = Dataset(tmp_path)
    rep = evaluate([("t", ds)], None, method="com")
    direct = [com_depth(accumulate_histogram(r)).depth_estimate for r in ds]
    assert [r[3] for r in rep.scatter] == direct
    assert rep.sets[0].mae == pytest.approx(np.mean(np.abs(np.array(direct) - ds.depths)))
    rep.write_csv(tmp_path / "r.csv")
    rep.write_scatter(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().count("\n") == 4
