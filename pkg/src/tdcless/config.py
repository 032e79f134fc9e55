"""Instrument and scene configuration, link budget and dToF unit helpers.

All simulator timestamps are integer picoseconds.  Rates produced by
:func:`link_budget` already include the photon detection efficiency, so the
event simulator only has to apply jitter and dead time.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Keys are the dataclass field names below and unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

C_LIGHT = 2.99792458e8  # m/s
H_PLANCK = 6.62607015e-34  # J s

# Spectral irradiance on the target per kLux of ambient light, at 940 nm.
# Chosen so that the default instrument sees N_sig/N_back ~ 1 per laser cycle
# for a 0.4 reflectivity target at 10 m under 25 kLux.
AMBIENT_IRRADIANCE_PER_KLUX = 0.01  # W m^-2 nm^-1 kLux^-1

COMBINERS = ("level_sst", "edge_sst", "adder_async")
DEAD_TIME_MODELS = ("nonparalyzable", "paralyzable")
LEVEL_SST_MODES = ("sum", "or")


class ConfigError(ValueError):
    """Invalid configuration value or file."""


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class OpticalConfig:
    pulse_energy: float = 640.0  # nJ
    pulse_fwhm: float = 4.0  # ns
    wavelength: float = 940.0  # nm
    laser_cycles: int = 45
    beam_divergence: float = 11.25  # deg, full angle
    trigger_jitter_fwhm: float = 100.0  # ps
    f_number: float = 1.2
    lens_transmittance: float = 0.5
    filter_bandwidth: float = 10.0  # nm
    # Lumped efficiency for losses outside the radiometric chain (SPAD fill
    # factor, beam overfill, optics).  Applied to signal and ambient alike.
    system_efficiency: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            _positive(f.name, getattr(self, f.name))
        for name in ("lens_transmittance", "system_efficiency"):
            if getattr(self, name) > 1:
                raise ConfigError(f"{name} must be <= 1")
        if int(self.laser_cycles) != self.laser_cycles:
            raise ConfigError("laser_cycles must be an integer")
        if self.beam_divergence >= 180:
            raise ConfigError("beam_divergence must be below 180 deg")


@dataclass(frozen=True)
class SensorConfig:
    spads_per_pixel: int = 16
    pixel_area: float = 1600.0  # um^2
    pde: float = 0.185
    dead_time: int = 4300  # ps
    spad_jitter_fwhm: float = 100.0  # ps
    combiner: str = "level_sst"
    sst_clock_period: int = 500  # ps
    cycle_window: int = 86_000  # ps
    histogram_bins: int = 172
    bin_width: int = 500  # ps
    sim_timestep: int = 1  # ps
    dead_time_model: str = "nonparalyzable"
    level_sst_mode: str = "sum"

    def __post_init__(self):
        for name in ("spads_per_pixel", "pixel_area", "pde", "dead_time",
                     "spad_jitter_fwhm", "sst_clock_period", "cycle_window",
                     "histogram_bins", "bin_width", "sim_timestep"):
            _positive(name, getattr(self, name))
        for name in ("spads_per_pixel", "dead_time", "sst_clock_period",
                     "cycle_window", "histogram_bins", "bin_width", "sim_timestep"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ConfigError(f"{name} must be an integer")
        if self.pde > 1:
            raise ConfigError("pde must be in (0, 1]")
        if self.histogram_bins * self.bin_width != self.cycle_window:
            raise ConfigError("histogram_bins * bin_width must equal cycle_window")
        if self.sim_timestep > self.bin_width:
            raise ConfigError("sim_timestep must not exceed bin_width")
        if self.combiner not in COMBINERS:
            raise ConfigError(f"combiner must be one of {COMBINERS}")
        if self.dead_time_model not in DEAD_TIME_MODELS:
            raise ConfigError(f"dead_time_model must be one of {DEAD_TIME_MODELS}")
        if self.level_sst_mode not in LEVEL_SST_MODES:
            raise ConfigError(f"level_sst_mode must be one of {LEVEL_SST_MODES}")


@dataclass(frozen=True)
class SceneInstance:
    depth: float  # m
    reflectivity: float
    ambient: float  # kLux

    def __post_init__(self):
        if not (self.depth > 0 and math.isfinite(self.depth)):
            raise ConfigError(f"depth must be positive, got {self.depth!r}")
        if not 0 <= self.reflectivity <= 1:
            raise ConfigError("reflectivity must be in [0, 1]")
        if not (self.ambient >= 0 and math.isfinite(self.ambient)):
            raise ConfigError("ambient must be non-negative")


@dataclass(frozen=True)
class RateBudget:
    signal_mean_per_cycle: float  # detected signal photons per laser cycle
    ambient_rate: float  # detected ambient photons per ps, whole macropixel

    def __post_init__(self):
        for name in ("signal_mean_per_cycle", "ambient_rate"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class PulseProfile:
    mu: float  # ps
    sigma: float  # ps

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")


def exposure_length(optical, sensor):
    """Exposure duration in ps (laser_cycles whole cycle windows)."""
    return int(optical.laser_cycles) * int(sensor.cycle_window)


def fwhm_to_sigma(fwhm):
    if not fwhm > 0:
        raise ValueError(f"FWHM must be positive, got {fwhm!r}")
    return fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def gaussian_profile(t, profile):
    """Normalised Gaussian pulse shape, 1/time units; works on arrays too."""
    z = (t - profile.mu) / profile.sigma
    return 1.0 / (profile.sigma * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * z * z)


def depth_to_tof(d):
    """Round-trip time of flight in ps for a target at ``d`` metres."""
    if d < 0:
        raise ValueError("depth must be >= 0")
    return 2.0 * d / C_LIGHT * 1e12


def tof_to_depth(t):
    """Depth in metres for a round-trip time ``t`` in ps."""
    if t < 0:
        raise ValueError("time of flight must be >= 0")
    return t * 1e-12 * C_LIGHT / 2.0


def photon_energy(wavelength_nm):
    return H_PLANCK * C_LIGHT / (wavelength_nm * 1e-9)


def link_budget(optical, sensor, scene):
    """Detected signal photons per cycle and ambient photons per ps.

    Lambertian target filling the pixel footprint, beam spread uniformly over
    a cone of full angle ``beam_divergence``.  For lens transmittance T and
    f-number N the image-plane irradiance from a radiance L is pi*L*T/(4N^2),
    so with L = rho*E/pi the pixel collects rho*E*T*A_pix/(4N^2) watts.  The
    laser irradiance on the target is E_pulse/(pi d^2 tan^2(div/2)), which
    gives the 1/d^2 law; the focal length cancels out.  ``system_efficiency``
    and the PDE scale both terms.
    """
    if scene.depth <= 0:
        raise ValueError("depth must be positive")
    e_ph = photon_energy(optical.wavelength)
    a_pix = sensor.pixel_area * 1e-12  # m^2
    collection = (scene.reflectivity * optical.lens_transmittance
                  * optical.system_efficiency * a_pix / (4.0 * optical.f_number ** 2))

    half = math.radians(optical.beam_divergence) / 2.0
    spot_area = math.pi * (scene.depth * math.tan(half)) ** 2
    photons_per_pulse = optical.pulse_energy * 1e-9 / e_ph
    signal = photons_per_pulse / spot_area * collection * sensor.pde

    irradiance = AMBIENT_IRRADIANCE_PER_KLUX * scene.ambient * optical.filter_bandwidth
    ambient_per_s = irradiance * collection / e_ph * sensor.pde
    return RateBudget(signal_mean_per_cycle=signal, ambient_rate=ambient_per_s * 1e-12)


def incident_sbr(optical, sensor, scene):
    """Incident signal/background photon ratio over one cycle window."""
    b = link_budget(optical, sensor, scene)
    if b.ambient_rate == 0:
        return math.inf
    return b.signal_mean_per_cycle / (b.ambient_rate * sensor.cycle_window)


# -- config files -----------------------------------------------------------

_SECTIONS = (OpticalConfig, SensorConfig)


def _coerce(cls, name, raw):
    default = getattr(cls(), name)
    try:
        if isinstance(default, str):
            return raw
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ConfigError(f"{name} must be an integer, got {raw!r}")
            return int(v)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text):
    """Parse ``key = value`` lines into (OpticalConfig, SensorConfig)."""
    owner = {f.name: cls for cls in _SECTIONS for f in fields(cls)}
    values = {cls: {} for cls in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in owner:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cls = owner[key]
        if key in values[cls]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[cls][key] = _coerce(cls, key, raw)
    return OpticalConfig(**values[OpticalConfig]), SensorConfig(**values[SensorConfig])


def load_config(path):
    return parse_config_text(Path(path).read_text())


def format_config(optical, sensor):
    lines = []
    for obj in (optical, sensor):
        for k, v in asdict(obj).items():
            lines.append(f"{k} = {v!r}" if not isinstance(v, str) else f"{k} = {v}")
    return "\n".join(lines) + "\n"


def apply_overrides(optical, sensor, overrides):
    """Return configs with ``overrides`` (key -> raw string/number) applied."""
    text = format_config(optical, sensor)
    current = dict(l.split(" = ", 1) for l in text.splitlines())
    for k, v in overrides.items():
        if k not in current:
            raise ConfigError(f"unknown key {k!r}")
        current[k] = str(v)
    return parse_config_text("\n".join(f"{k} = {v}" for k, v in current.items()))


__all__ = [
    "AMBIENT_IRRADIANCE_PER_KLUX", "C_LIGHT", "ConfigError", "OpticalConfig",
    "PulseProfile", "RateBudget", "SceneInstance", "SensorConfig",
    "apply_overrides", "depth_to_tof", "exposure_length", "format_config",
    "fwhm_to_sigma", "gaussian_profile", "incident_sbr", "link_budget",
    "load_config", "parse_config_text", "tof_to_depth",
]
