"""Event-driven SPAD photon detection simulator.

One exposure is ``laser_cycles`` back-to-back cycle windows.  Ambient photons
form a homogeneous Poisson process over the whole exposure; signal photons
form, per cycle, an inhomogeneous Poisson process whose intensity is the
per-cycle signal mean times the normalised Gaussian pulse shape.  Candidate
arrivals are spread uniformly over the SPADs of the macropixel, jittered and
passed through the dead-time filter.

The laser emits at the nominal cycle starts ``k * cycle_window``.  The trigger
timestamps the electronics see (``trigger_times``) carry the laser trigger
jitter, so histograms referenced to them are smeared by it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numba
import numpy as np

from .config import (
    COMBINERS, DEAD_TIME_MODELS, LEVEL_SST_MODES, OpticalConfig, PulseProfile,
    RateBudget, SceneInstance, SensorConfig, depth_to_tof, exposure_length,
    fwhm_to_sigma, gaussian_profile, link_budget,
)

RNG_ALGORITHM = "numpy.PCG64 seeded via SeedSequence(master_seed, spawn_key=(index,))"
PROFILE_HALF_SPAN = 6.0  # thinning window half-width in pulse sigmas


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def sample_ambient(rate, length, rng):
    """Homogeneous Poisson arrivals on [0, length) ps by exponential gaps.

    Returns sorted int64 timestamps (floored to whole ps).
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate == 0 or length <= 0:
        return np.empty(0, dtype=np.int64)
    mean = rate * length
    chunks = []
    t0 = 0.0
    while True:
        n = int(mean + 5.0 * np.sqrt(mean) + 16)
        t = t0 + np.cumsum(rng.exponential(1.0 / rate, size=n))
        if t[-1] >= length:
            chunks.append(t[t < length])
            break
        chunks.append(t)
        t0 = t[-1]
    return np.floor(np.concatenate(chunks)).astype(np.int64)


def sample_signal(budget, profile, pulse_times, sensor, rng, length=None):
    """Signal arrivals for every laser pulse, by thinning.

    ``profile.mu`` is the return delay relative to each entry of
    ``pulse_times``.  Per pulse, a homogeneous process at the peak intensity
    ``r_b / (sigma sqrt(2 pi))`` is drawn on ``mu +- 6 sigma`` and each point is
    kept with probability ``r_n(t) / r_n(mu)``, so the expected count per
    pulse is ``budget.signal_mean_per_cycle``.
    """
    r_b = budget.signal_mean_per_cycle
    pulse_times = np.asarray(pulse_times, dtype=np.float64)
    if r_b == 0 or len(pulse_times) == 0:
        return np.empty(0, dtype=np.int64)
    sigma = profile.sigma
    span = 2.0 * PROFILE_HALF_SPAN * sigma
    peak = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    counts = rng.poisson(r_b * peak * span, size=len(pulse_times))
    offsets = profile.mu - 0.5 * span + span * rng.random(counts.sum())
    keep = rng.random(offsets.size) * peak < gaussian_profile(offsets, profile)
    times = np.repeat(pulse_times, counts)[keep] + offsets[keep]
    times.sort()
    times = np.floor(times).astype(np.int64)
    if length is not None:
        times = times[(times >= 0) & (times < length)]
    return times


@numba.njit(cache=True)
def _dead_time_filter(times, dead_time, paralyzable):
    out = np.empty_like(times)
    n = 0
    last = np.int64(-(1 << 62))
    for t in times:
        if t - last >= dead_time:
            out[n] = t
            n += 1
            last = t
        elif paralyzable:
            last = t
    return out[:n]


def dead_time_filter(times, dead_time, model="nonparalyzable"):
    """Filter one SPAD's sorted candidate times through its dead time."""
    if model not in DEAD_TIME_MODELS:
        raise ValueError(f"unknown dead time model {model!r}")
    times = np.ascontiguousarray(times, dtype=np.int64)
    if times.size == 0:
        return times
    return _dead_time_filter(times, np.int64(dead_time), model == "paralyzable")


def apply_spad(arrivals, sensor, rng, length=None, spad_index=None, jitter=True):
    """Turn macropixel arrivals into per-SPAD detection streams.

    Arrivals are assigned to SPADs uniformly at random unless ``spad_index``
    is given.  Each arrival gets Gaussian firing jitter (rounded to ps), then
    the per-SPAD dead-time filter is applied.  Returns a list of int64 arrays.
    """
    arrivals = np.asarray(arrivals, dtype=np.int64)
    n_spad = int(sensor.spads_per_pixel)
    if spad_index is None:
        spad_index = rng.integers(0, n_spad, size=arrivals.size)
    spad_index = np.asarray(spad_index)
    t = arrivals
    if jitter and arrivals.size:
        sig = fwhm_to_sigma(sensor.spad_jitter_fwhm)
        t = arrivals + np.rint(rng.normal(0.0, sig, size=arrivals.size)).astype(np.int64)
    keep = t >= 0
    if length is not None:
        keep &= t < length
    t, spad_index = t[keep], spad_index[keep]
    order = np.lexsort((t, spad_index))
    t, spad_index = t[order], spad_index[order]
    bounds = np.searchsorted(spad_index, np.arange(n_spad + 1))
    return [dead_time_filter(t[bounds[i]:bounds[i + 1]], sensor.dead_time,
                             sensor.dead_time_model) for i in range(n_spad)]


def trigger_jitter(optical, sensor, rng):
    """Jittered trigger timestamps, clipped into the exposure."""
    k = np.arange(int(optical.laser_cycles), dtype=np.float64) * sensor.cycle_window
    sig = fwhm_to_sigma(optical.trigger_jitter_fwhm)
    t = np.rint(k + rng.normal(0.0, sig, size=k.size)).astype(np.int64)
    return np.clip(t, 0, exposure_length(optical, sensor) - 1)


@dataclass
class ExposureRecord:
    optical: OpticalConfig
    sensor: SensorConfig
    scene: SceneInstance
    seed: int
    trigger_times: np.ndarray
    events: list = field(default_factory=list)
    ground_truth_tof: float = 0.0

    @property
    def length(self):
        return exposure_length(self.optical, self.sensor)

    @property
    def n_events(self):
        return int(sum(len(e) for e in self.events))

    def to_bytes(self, sections=()):
        return encode_exposure(self, sections)

    def __eq__(self, other):
        return isinstance(other, ExposureRecord) and self.to_bytes() == other.to_bytes()


def simulate_exposure(optical, sensor, scene, seed, budget=None):
    """Simulate one exposure; fully determined by its arguments.

    ``budget`` overrides the link budget (e.g. rates from an external model).
    """
    rng = make_rng(seed)
    if budget is None:
        budget = link_budget(optical, sensor, scene)
    length = exposure_length(optical, sensor)
    triggers = trigger_jitter(optical, sensor, rng)
    tof = depth_to_tof(scene.depth)
    profile = PulseProfile(mu=tof, sigma=fwhm_to_sigma(optical.pulse_fwhm * 1000.0))
    pulses = np.arange(int(optical.laser_cycles), dtype=np.int64) * sensor.cycle_window
    ambient = sample_ambient(budget.ambient_rate, length, rng)
    signal = sample_signal(budget, profile, pulses, sensor, rng, length)
    arrivals = np.concatenate([ambient, signal])
    events = apply_spad(arrivals, sensor, rng, length=length)
    return ExposureRecord(optical, sensor, scene, int(seed), triggers, events, tof)


# -- binary format ------------------------------------------------------------
#
# little-endian:
#   "TDCX" u16 version u16 section-flags
#   optical: f8 pulse_energy f8 pulse_fwhm f8 wavelength u4 laser_cycles
#            f8 beam_divergence f8 trigger_jitter_fwhm f8 f_number
#            f8 lens_transmittance f8 filter_bandwidth f8 system_efficiency
#   sensor:  u4 spads f8 pixel_area f8 pde u4 dead_time f8 spad_jitter_fwhm
#            u1 combiner u4 clock u4 cycle_window u4 bins u4 bin_width
#            u4 sim_timestep u1 dead_time_model u1 level_sst_mode
#   scene:   f8 depth f8 reflectivity f8 ambient
#   u8 seed, f8 ground_truth_tof
#   u4 n_triggers, u8[n_triggers]
#   u4 n_spads, then per SPAD: u4 count, u8[count]
#   optional sections, in flag-bit order: u4 length, u1[length]
#     bit 0: level-SST samples, bit 1: edge-SST counts

MAGIC = b"TDCX"
FORMAT_VERSION = 1
SECTION_LEVEL_SST = 1
SECTION_EDGE_SST = 2

_HEAD = struct.Struct("<4sHH")
_OPTICAL = struct.Struct("<dddIdddddd")
_SENSOR = struct.Struct("<IddIdBIIIIIBB")
_TAIL = struct.Struct("<dddQd")


def encode_exposure(rec, sections=()):
    from .combine import combine_edge_sst, combine_level_sst

    flags = 0
    for s in sections:
        flags |= {"level_sst": SECTION_LEVEL_SST, "edge_sst": SECTION_EDGE_SST}[s]
    o, s, sc = rec.optical, rec.sensor, rec.scene
    parts = [
        _HEAD.pack(MAGIC, FORMAT_VERSION, flags),
        _OPTICAL.pack(o.pulse_energy, o.pulse_fwhm, o.wavelength, int(o.laser_cycles),
                      o.beam_divergence, o.trigger_jitter_fwhm, o.f_number,
                      o.lens_transmittance, o.filter_bandwidth, o.system_efficiency),
        _SENSOR.pack(int(s.spads_per_pixel), s.pixel_area, s.pde, int(s.dead_time),
                     s.spad_jitter_fwhm, COMBINERS.index(s.combiner),
                     int(s.sst_clock_period), int(s.cycle_window), int(s.histogram_bins),
                     int(s.bin_width), int(s.sim_timestep),
                     DEAD_TIME_MODELS.index(s.dead_time_model),
                     LEVEL_SST_MODES.index(s.level_sst_mode)),
        _TAIL.pack(sc.depth, sc.reflectivity, sc.ambient, rec.seed, rec.ground_truth_tof),
        struct.pack("<I", len(rec.trigger_times)),
        np.asarray(rec.trigger_times, dtype="<u8").tobytes(),
        struct.pack("<I", len(rec.events)),
    ]
    for ev in rec.events:
        parts.append(struct.pack("<I", len(ev)))
        parts.append(np.asarray(ev, dtype="<u8").tobytes())
    if flags & SECTION_LEVEL_SST:
        parts.append(_u8_section(combine_level_sst(rec.events, s, rec.length).values))
    if flags & SECTION_EDGE_SST:
        parts.append(_u8_section(combine_edge_sst(rec.events, s, rec.length).values))
    return b"".join(parts)


def _u8_section(values):
    data = np.asarray(values, dtype=np.uint8).tobytes()
    return struct.pack("<I", len(data)) + data


def decode_exposure(buf, offset=0):
    """Parse one exposure from ``buf``; returns (record, sections, end_offset)."""
    mv = memoryview(buf)
    magic, version, flags = _HEAD.unpack_from(mv, offset)
    if magic != MAGIC:
        raise ValueError("not an exposure record (bad magic)")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported exposure format version {version}")
    pos = offset + _HEAD.size
    ov = _OPTICAL.unpack_from(mv, pos)
    pos += _OPTICAL.size
    sv = _SENSOR.unpack_from(mv, pos)
    pos += _SENSOR.size
    depth, refl, amb, seed, tof = _TAIL.unpack_from(mv, pos)
    pos += _TAIL.size
    optical = OpticalConfig(*ov)
    sensor = SensorConfig(
        spads_per_pixel=sv[0], pixel_area=sv[1], pde=sv[2], dead_time=sv[3],
        spad_jitter_fwhm=sv[4], combiner=COMBINERS[sv[5]], sst_clock_period=sv[6],
        cycle_window=sv[7], histogram_bins=sv[8], bin_width=sv[9],
        sim_timestep=sv[10], dead_time_model=DEAD_TIME_MODELS[sv[11]],
        level_sst_mode=LEVEL_SST_MODES[sv[12]])
    (n_trig,) = struct.unpack_from("<I", mv, pos)
    pos += 4
    triggers = np.frombuffer(mv, dtype="<u8", count=n_trig, offset=pos).astype(np.int64)
    pos += 8 * n_trig
    (n_spad,) = struct.unpack_from("<I", mv, pos)
    pos += 4
    events = []
    for _ in range(n_spad):
        (n,) = struct.unpack_from("<I", mv, pos)
        pos += 4
        events.append(np.frombuffer(mv, dtype="<u8", count=n, offset=pos).astype(np.int64))
        pos += 8 * n
    sections = {}
    for bit, name in ((SECTION_LEVEL_SST, "level_sst"), (SECTION_EDGE_SST, "edge_sst")):
        if flags & bit:
            (n,) = struct.unpack_from("<I", mv, pos)
            pos += 4
            sections[name] = np.frombuffer(mv, dtype=np.uint8, count=n, offset=pos).copy()
            pos += n
    rec = ExposureRecord(optical, sensor, SceneInstance(depth, refl, amb), seed,
                         triggers, events, tof)
    return rec, sections, pos
