"""SPAD combination trees: level-/edge-sensitive SST and the asynchronous adder.

A SPAD's digital output is modelled as high on ``(t, t + dead_time]`` after a
detection at ``t``.  Level-SST samples the number of high outputs at every
clock edge ``k * clock``; edge-SST counts rising edges per clock period; the
adder tree passes the merged edges through without a clock.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ClockedStream:
    clock_period: int
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass
class MergedEdgeStream:
    times: np.ndarray

    def __len__(self):
        return len(self.times)


def _n_periods(length, clock):
    if length % clock:
        raise ValueError("exposure length must be a multiple of the clock period")
    return length // clock


def _all_events(events):
    if len(events) == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([np.asarray(e, dtype=np.int64) for e in events])


def combine_level_sst(events, sensor, length, mode=None):
    """Sampled count of SPADs whose output is high at each clock edge.

    ``mode='or'`` gives the single-bit variant (any SPAD high).
    """
    clock = int(sensor.sst_clock_period)
    n = _n_periods(length, clock)
    t = _all_events(events)
    diff = np.zeros(n + 1, dtype=np.int64)
    lo = t // clock + 1  # first edge strictly after t
    hi = np.minimum((t + int(sensor.dead_time)) // clock, n - 1)  # last edge <= t + dead
    ok = lo <= hi
    np.add.at(diff, lo[ok], 1)
    np.add.at(diff, hi[ok] + 1, -1)
    values = np.cumsum(diff[:n])
    mode = mode or sensor.level_sst_mode
    if mode == "or":
        values = np.minimum(values, 1)
    return ClockedStream(clock, values.astype(np.uint8))


def combine_edge_sst(events, sensor, length):
    """Rising edges per clock period ``[k*clock, (k+1)*clock)``."""
    clock = int(sensor.sst_clock_period)
    n = _n_periods(length, clock)
    t = _all_events(events)
    counts = np.bincount(t // clock, minlength=n)[:n]
    return ClockedStream(clock, counts.astype(np.uint8))


def combine_adder(events):
    """Clock-free adder tree: the sorted union of all detection times."""
    t = _all_events(events)
    return MergedEdgeStream(np.sort(t, kind="stable"))


def adder_levels(merged, pulse_width, dt, length):
    """Mean number of SPAD outputs high over each network step.

    Step ``k`` averages the adder output over ``[(k - 1/2) dt, (k + 1/2) dt)``,
    i.e. it is centred on the instant a level-SST tree would sample.
    """
    n = _n_periods(length, dt)
    starts = np.sort(np.asarray(merged.times, dtype=np.float64))
    ends = starts + pulse_width
    grid = (np.arange(n + 1) - 0.5) * dt

    def ramp_sum(points):
        # sum_i max(x - p_i, 0) for every grid x
        idx = np.searchsorted(points, grid, side="right")
        csum = np.concatenate([[0.0], np.cumsum(points)])
        return idx * grid - csum[idx]

    area = ramp_sum(starts) - ramp_sum(np.sort(ends))
    return np.diff(area) / dt
