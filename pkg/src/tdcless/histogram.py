"""Trigger-referenced photon histograms and centre-of-mass depth extraction."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import tof_to_depth

DEFAULT_WINDOW = 8  # bins either side of the peak, ~ +-4 ns


class NoSignalError(ValueError):
    """Histogram holds no counts."""


class DegeneratePeakError(ValueError):
    """Nothing left after background subtraction."""


@dataclass
class Histogram:
    bins: np.ndarray
    bin_width: int  # ps

    @property
    def centers(self):
        return (np.arange(len(self.bins)) + 0.5) * self.bin_width

    def to_csv(self, path):
        rows = ["bin_index,count"]
        rows += [f"{i},{int(c)}" for i, c in enumerate(self.bins)]
        Path(path).write_text("\n".join(rows) + "\n")


@dataclass
class ComResult:
    tof_estimate: float  # ps
    depth_estimate: float  # m
    peak_bin: int
    background_level: float  # counts per bin


def relative_times(times, trigger_times, cycle_window):
    """Time since the latest trigger at or before each event; -1 if none/outside."""
    times = np.asarray(times, dtype=np.int64)
    trig = np.asarray(trigger_times, dtype=np.int64)
    k = np.searchsorted(trig, times, side="right") - 1
    rel = np.where(k >= 0, times - trig[np.maximum(k, 0)], -1)
    rel[rel >= cycle_window] = -1
    return rel


def accumulate_histogram(exposure, sensor=None):
    """Bin every rising edge by its delay after the preceding trigger."""
    sensor = sensor or exposure.sensor
    t = np.concatenate([np.asarray(e, dtype=np.int64) for e in exposure.events]) \
        if exposure.events else np.empty(0, dtype=np.int64)
    rel = relative_times(t, exposure.trigger_times, sensor.cycle_window)
    rel = rel[rel >= 0]
    bins = np.bincount(rel // sensor.bin_width, minlength=sensor.histogram_bins)
    return Histogram(bins[: sensor.histogram_bins].astype(np.int64), int(sensor.bin_width))


def com_depth(hist, window_halfwidth=DEFAULT_WINDOW):
    """Centre of mass around the histogram peak, after median background removal."""
    bins = np.asarray(hist.bins, dtype=np.float64)
    if bins.sum() <= 0:
        raise NoSignalError("empty histogram")
    peak = int(np.argmax(bins))
    lo = max(peak - window_halfwidth, 0)
    hi = min(peak + window_halfwidth, len(bins) - 1)
    outside = np.concatenate([bins[:lo], bins[hi + 1:]])
    background = float(np.median(outside)) if outside.size else 0.0
    w = np.maximum(bins[lo:hi + 1] - background, 0.0)
    if w.sum() <= 0:
        raise DegeneratePeakError("no counts above background")
    centers = (np.arange(lo, hi + 1) + 0.5) * hist.bin_width
    tof = float(np.dot(w, centers) / w.sum())
    return ComResult(tof, tof_to_depth(tof), peak, background)
