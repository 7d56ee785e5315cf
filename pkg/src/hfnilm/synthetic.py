"""Virtual houses built from square and triangular appliance signatures.

Used for desk-scale end-to-end runs where no real recordings are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ActivationParams, House
from .series import CANONICAL_PERIOD, MultivariateSeries, POWER_CHANNEL, PowerSeries
from .waveform import WaveformRecord

SAMPLES_PER_DAY = int(86400 / CANONICAL_PERIOD)


@dataclass(frozen=True)
class ApplianceProfile:
    name: str
    shape: str  # "square" or "triangle"
    power: tuple[float, float]  # watts, uniform range
    duration: tuple[int, int]  # samples, inclusive range
    per_day: float


def signature(shape: str, power: float, length: int) -> np.ndarray:
    if shape == "square":
        return np.full(length, float(power))
    if shape == "triangle":
        x = np.linspace(0.0, 1.0, length)
        return power * (1.0 - np.abs(2.0 * x - 1.0)) + 0.05 * power
    raise ValueError(f"unknown signature shape {shape!r}")


def appliance_series(profile: ApplianceProfile, n: int, rng: np.random.Generator, min_gap: int = 150) -> np.ndarray:
    """Non-overlapping activations of one appliance on an ``n``-sample timeline."""
    out = np.zeros(n)
    count = rng.poisson(profile.per_day * n / SAMPLES_PER_DAY)
    t = 0
    starts = np.sort(rng.integers(0, n, size=count))
    for s in starts:
        s = max(int(s), t)
        length = int(rng.integers(profile.duration[0], profile.duration[1] + 1))
        if s + length >= n:
            break
        out[s : s + length] = signature(profile.shape, rng.uniform(*profile.power), length)
        t = s + length + min_gap
    return out


DEFAULT_PROFILES = (
    ApplianceProfile("kettle", "square", (2000.0, 3000.0), (20, 40), 14.0),
    ApplianceProfile("heater", "triangle", (600.0, 1800.0), (15, 90), 12.0),
    ApplianceProfile("microwave", "square", (900.0, 1300.0), (10, 40), 8.0),
    ApplianceProfile("pump", "triangle", (300.0, 900.0), (30, 120), 10.0),
)

# activation rules matching the profiles above
CORPUS_PARAMS = {
    "kettle": ActivationParams(1500.0, 60.0, 300.0, border=3),
    "heater": ActivationParams(250.0, 60.0, 900.0),
    "microwave": ActivationParams(600.0, 30.0, 300.0),
    "pump": ActivationParams(150.0, 60.0, 900.0),
}


def virtual_house(
    name: str,
    days: float,
    rng: np.random.Generator,
    profiles=DEFAULT_PROFILES,
    power_scale: float = 1.0,
    base_load: float = 120.0,
    noise: float = 15.0,
    start_time: float = 1.6e9,
) -> House:
    n = int(days * SAMPLES_PER_DAY)
    submeters = {}
    for p in profiles:
        scaled = ApplianceProfile(p.name, p.shape, (p.power[0] * power_scale, p.power[1] * power_scale), p.duration, p.per_day)
        submeters[p.name] = PowerSeries(start_time, CANONICAL_PERIOD, appliance_series(scaled, n, rng))
    agg = base_load + noise * np.abs(rng.standard_normal(n)) + sum(s.values for s in submeters.values())
    return House(name, MultivariateSeries(start_time, CANONICAL_PERIOD, {POWER_CHANNEL: agg}), submeters)


def synthetic_corpus(days: float = 8.0, seed: int = 0) -> list[House]:
    """Two virtual houses; the second uses slightly different appliance ratings."""
    ss = np.random.SeedSequence(seed)
    ra, rb = (np.random.default_rng(s) for s in ss.spawn(2))
    return [virtual_house("house_a", days, ra), virtual_house("house_b", days, rb, power_scale=0.9)]


# -- switch-on waveforms ------------------------------------------------------

# label -> (current amplitude A, lag rad, 3rd-harmonic ratio, inrush multiple)
WAVEFORM_CLASSES = {
    "heater": (8.0, 0.0, 0.01, 1.0),
    "fan": (0.6, 0.9, 0.05, 2.5),
    "laptop": (0.9, -0.3, 0.7, 4.0),
    "fridge": (1.5, 1.1, 0.12, 5.0),
}


def switch_on_waveform(
    label: str,
    rng: np.random.Generator,
    fs: float = 30000.0,
    f0: float = 60.0,
    cycles: int = 60,
    off_cycles: int = 5,
    vrms: float = 120.0,
) -> WaveformRecord:
    """One labelled switch-on record: a few idle cycles, a decaying inrush, then steady state."""
    amp, lag, h3, inrush = WAVEFORM_CLASSES[label]
    amp *= rng.uniform(0.9, 1.1)
    lag += rng.normal(0.0, 0.05)
    n = int(round(cycles * fs / f0))
    t = np.arange(n) / fs
    w = 2 * np.pi * f0
    v = vrms * np.sqrt(2) * np.sin(w * t)
    i = amp * (np.sin(w * t - lag) + h3 * np.sin(3 * (w * t - lag)))
    t_on = off_cycles / f0
    envelope = 1.0 + (inrush - 1.0) * np.exp(-np.clip(t - t_on, 0, None) / (4.0 / f0))
    i = np.where(t >= t_on, i * envelope, 0.0) + rng.normal(0.0, 0.002 * amp, n)
    return WaveformRecord(fs, f0, v, i, label)
