"""Per-exposure energy from spike counts, and power at a frame rate.

Energies are held as integer zeptojoules so that products with integer spike
counts are exact; display rounding (one integer in the largest SI unit that
keeps the value >= 1, halves rounded up) is applied only when formatting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

ZJ_PER_J = 10**21
_PREFIXES = [("", 21), ("m", 18), ("u", 15), ("n", 12), ("p", 9), ("f", 6), ("a", 3), ("z", 0)]


def parse_energy(text):
    """'1.90 fJ' -> integer zeptojoules (must be exact)."""
    value, unit = text.strip().split()
    if not unit.endswith("J"):
        raise ValueError(f"not an energy: {text!r}")
    exp = dict(_PREFIXES)[unit[:-1]]
    zj = Decimal(value).scaleb(exp)
    if zj != zj.to_integral_value():
        raise ValueError(f"{text!r} is not a whole number of zeptojoules")
    return int(zj)


@dataclass(frozen=True)
class NeuronEnergyProfile:
    name: str
    neural_zj: int  # E_n
    synaptic_zj: int  # E_s
    note: str = ""

    def __post_init__(self):
        if self.neural_zj <= 0 or self.synaptic_zj <= 0:
            raise ValueError("spike energies must be positive")

    @classmethod
    def from_text(cls, name, neural, synaptic, note=""):
        return cls(name, parse_energy(neural), parse_energy(synaptic), note)


PRESETS = {
    p.name: p for p in (
        NeuronEnergyProfile.from_text("btbt", "1.90 fJ", "190 aJ", "band-to-band-tunnelling LIF"),
        NeuronEnergyProfile.from_text("graphene", "400 fJ", "30 fJ", "graphene memristive LIF"),
        NeuronEnergyProfile.from_text("cmos", "2.18 pJ", "218 fJ", "CMOS LIF benchmark"),
        NeuronEnergyProfile.from_text("l_bimos", "180 fJ", "18 fJ", "L-shaped bipolar-MOS LIF"),
        NeuronEnergyProfile.from_text("tfet", "1.5 aJ", "150 zJ", "tunnel-FET LIF"),
    )
}
DEFAULT_PRESET = "btbt"
DEFAULT_SYNAPSE_RATIO = 10


@dataclass(frozen=True)
class EnergyEstimate:
    neural_zj: int  # E_n * N_n
    synaptic_zj: int  # E_s * N_s

    @property
    def total_zj(self):
        return self.neural_zj + self.synaptic_zj

    @property
    def total_joules(self):
        return self.total_zj / ZJ_PER_J


def estimate_energy(counters, profile):
    """E_T = E_s * N_s + E_n * N_n, exact in zeptojoules."""
    n_n, n_s = int(counters.neural), int(counters.synaptic)
    if n_n < 0 or n_s < 0:
        raise ValueError("spike counts must be non-negative")
    return EnergyEstimate(profile.neural_zj * n_n, profile.synaptic_zj * n_s)


def power_at_fps(energy_zj, fps):
    """Power in watts as an exact Fraction: energy per exposure times frame rate."""
    if not fps > 0:
        raise ValueError("fps must be positive")
    return Fraction(int(energy_zj), ZJ_PER_J) * Fraction(fps)


def derive_synaptic_energy(neural_zj, ratio=DEFAULT_SYNAPSE_RATIO):
    """E_s = E_n / ratio (zeptojoules, exact Fraction)."""
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    return Fraction(int(neural_zj)) / Fraction(ratio)


def format_si(value, unit="J", digits=0, base_exp=-21):
    """Round-half-up display in the largest SI prefix keeping the value >= 1.

    ``value`` is an exact number (int/Fraction) in units of 10**base_exp.
    """
    v = Fraction(value)
    if v == 0:
        return f"0 {unit}"
    for prefix, exp in _PREFIXES:
        scaled = v / Fraction(10) ** (exp + base_exp + 21) if exp + base_exp + 21 >= 0 \
            else v * Fraction(10) ** -(exp + base_exp + 21)
        if abs(scaled) >= 1 or prefix == "z":
            d = (Decimal(scaled.numerator) / Decimal(scaled.denominator)).quantize(
                Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)
            return f"{d} {prefix}{unit}"
    raise AssertionError("unreachable")


def format_energy(zj, digits=0):
    return format_si(zj, "J", digits)


def format_energy_exact(zj):
    """Unrounded display, e.g. 1900000 zJ -> '1.9 fJ'."""
    text = format_si(zj, "J", 3)
    value, unit = text.split()
    value = value.rstrip("0").rstrip(".") if "." in value else value
    return f"{value} {unit}"


def format_power(watts, digits=2):
    """Power given as an exact Fraction of watts."""
    return format_si(Fraction(watts) * ZJ_PER_J, "W", digits)


def energy_rows(counters, profiles=None, fps=30):
    rows = []
    for p in (profiles or PRESETS.values()):
        e = estimate_energy(counters, p)
        rows.append({
            "profile": p.name, "N_n": counters.neural, "N_s": counters.synaptic,
            "E_n": format_energy_exact(p.neural_zj), "E_s": format_energy_exact(p.synaptic_zj),
            "E_n_N_n": format_energy(e.neural_zj), "E_s_N_s": format_energy(e.synaptic_zj),
            "total": format_energy(e.total_zj),
            "total_joules": f"{e.total_joules:.6e}",
            f"power_at_{fps}fps": format_power(power_at_fps(e.total_zj, fps)),
        })
    return rows


def write_energy_report(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
