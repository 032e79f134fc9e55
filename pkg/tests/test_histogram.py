import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdcless.config import OpticalConfig, SceneInstance, SensorConfig
from tdcless.events import ExposureRecord, simulate_exposure
from tdcless.histogram import (
    DegeneratePeakError, Histogram, NoSignalError, accumulate_histogram, com_depth,
)

SENSOR = SensorConfig()
OPTICAL = OpticalConfig()


def _record(events, triggers=None):
    triggers = np.arange(45, dtype=np.int64) * SENSOR.cycle_window if triggers is None else triggers
    return ExposureRecord(OPTICAL, SENSOR, SceneInstance(1.0, 0.5, 0.0), 0, triggers,
                          [np.asarray(e, dtype=np.int64) for e in events], 0.0)


def test_empty_exposure_gives_zero_histogram():
    h = accumulate_histogram(_record([[]] * 16))
    assert h.bins.shape == (172,) and not h.bins.any()


def test_single_edge_bin():
    h = accumulate_histogram(_record([[750]]))
    assert h.bins[1] == 1 and h.bins.sum() == 1


@given(st.lists(st.integers(0, 45 * 86_000 - 1), max_size=200), st.integers(0, 2**32))
def test_histogram_matches_per_cycle_oracle(times, seed):
    rng = np.random.default_rng(seed)
    trig = np.sort(np.clip(np.arange(45) * 86_000 + rng.integers(-200, 200, 45), 0, None))
    h = accumulate_histogram(_record([sorted(times)], trig))
    want = np.zeros(172, dtype=int)
    for t in times:
        before = [x for x in trig if x <= t]
        if not before:
            continue
        rel = t - max(before)
        if rel < 86_000:
            want[rel // 500] += 1
    assert h.bins.tolist() == want.tolist()
    assert h.bins.sum() <= len(times)


def _hist(bins):
    return Histogram(np.asarray(bins), 500)


def test_com_single_bin_and_triangle():
    b = np.zeros(172)
    b[37] = 5
    assert com_depth(_hist(b)).tof_estimate == (37 + 0.5) * 500
    b = np.zeros(172)
    b[8:13] = [1, 2, 3, 2, 1]
    r = com_depth(_hist(b), window_halfwidth=2)
    assert r.tof_estimate == pytest.approx(10.5 * 500) and r.peak_bin == 10


def test_com_errors_and_ties():
    with pytest.raises(NoSignalError):
        com_depth(_hist(np.zeros(172)))
    with pytest.raises(DegeneratePeakError):
        com_depth(_hist(np.full(172, 3)))
    b = np.zeros(172)
    b[[20, 90]] = 4
    assert com_depth(_hist(b)).peak_bin == 20


@given(st.integers(20, 140), st.integers(-10, 10), st.integers(1, 5))
def test_com_shift_and_scale_invariance(center, shift, scale):
    b = np.zeros(172)
    b[center - 3:center + 4] = [1, 3, 6, 9, 7, 2, 1]
    base = com_depth(_hist(b))
    shifted = com_depth(_hist(np.roll(b, shift)))
    assert shifted.tof_estimate == pytest.approx(base.tof_estimate + shift * 500)
    scaled = com_depth(_hist(b * scale))
    assert scaled.peak_bin == base.peak_bin
    assert scaled.tof_estimate == pytest.approx(base.tof_estimate)


@given(st.integers(0, 3))
def test_com_constant_background_robustness(c):
    rng = np.random.default_rng(c)
    b = rng.integers(3, 6, 172).astype(float)
    b[60:67] += [5, 20, 60, 90, 55, 18, 4]
    base = com_depth(_hist(b))
    bumped = com_depth(_hist(b + min(c, b.min())))
    assert bumped.tof_estimate == pytest.approx(base.tof_estimate)


def test_com_high_signal_at_five_metres():
    rec = simulate_exposure(OPTICAL, SENSOR, SceneInstance(5.0, 1.0, 0.0), 3)
    r = com_depth(accumulate_histogram(rec))
    assert abs(r.depth_estimate - 5.0) <= 0.04
    assert 0 <= r.tof_estimate < SENSOR.cycle_window


def test_histogram_csv(tmp_path):
    b = np.zeros(172, dtype=int)
    b[3] = 2
    _hist(b).to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_index,count" and lines[4] == "3,2" and len(lines) == 173
