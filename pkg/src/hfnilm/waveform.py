"""High-frequency current/voltage features.

Two consumers: the per-slot channels (form factor and fundamental phase shift)
that are appended to the 6 s power series, and the appliance-identification
feature study in :mod:`hfnilm.classify`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .series import CANONICAL_PERIOD, HF_CHANNELS, MultivariateSeries

log = logging.getLogger(__name__)

EPS = 1e-9
ODD_HARMONICS = tuple(range(3, 22, 2))
MAX_HARMONIC = max(ODD_HARMONICS)
VI_SIZE = 16

SETTLE_CYCLES = 5
SETTLE_TOLERANCE = 0.10
ON_FLOOR_FRACTION = 0.10


class DegenerateSignalError(ValueError):
    """The waveform carries too little energy for the requested feature."""


@dataclass(frozen=True)
class WaveformRecord:
    fs: float
    f0: float
    voltage: np.ndarray
    current: np.ndarray
    label: str | None = None
    start_time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.voltage, dtype=np.float64)
        i = np.asarray(self.current, dtype=np.float64)
        if v.shape != i.shape or v.ndim != 1:
            raise ValueError("voltage and current must be 1-D and the same length")
        if self.fs <= 0 or self.f0 <= 0:
            raise ValueError("fs and f0 must be positive")
        if len(v) < 2 * self.fs / self.f0:
            raise ValueError("record shorter than two mains cycles")
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "current", i)

    @property
    def samples_per_cycle(self) -> float:
        return self.fs / self.f0

    @property
    def duration(self) -> float:
        return len(self.current) / self.fs


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def form_factor(x) -> float:
    """RMS over mean absolute value; ``pi / (2 sqrt 2)`` for a sinusoid."""
    x = np.asarray(x, dtype=np.float64)
    mean_abs = float(np.mean(np.abs(x))) if len(x) else 0.0
    if mean_abs <= EPS:
        raise DegenerateSignalError("form factor undefined for a (near) zero signal")
    return rms(x) / mean_abs


def whole_cycles(n: int, fs: float, f0: float) -> int:
    """Largest sample count covering an integer number of mains cycles."""
    spc = fs / f0
    cycles = int(math.floor(n / spc + 1e-9))
    return int(math.floor(cycles * spc + 1e-9))


def harmonic_phasor(x, freq: float, fs: float) -> complex:
    """Single-bin Fourier projection of ``x`` at ``freq``.

    Normalized so a sinusoid of amplitude A yields magnitude A (peak). The caller
    is responsible for truncating ``x`` to whole cycles of ``freq``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = np.arange(len(x))
    basis = np.exp(-2j * np.pi * freq * n / fs)
    return complex(2.0 * np.dot(x, basis) / len(x))


def wrap_phase(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = (angle + math.pi) % (2 * math.pi) - math.pi
    return math.pi if w == -math.pi else w


def fundamental_phase_shift(i, v, f0: float, fs: float) -> float:
    """Phase of the current fundamental minus the voltage fundamental (radians).

    A lagging (inductive) current gives a negative value.
    """
    n = whole_cycles(min(len(i), len(v)), fs, f0)
    if n == 0:
        raise DegenerateSignalError("need at least one full mains cycle")
    I1 = harmonic_phasor(np.asarray(i)[:n], f0, fs)
    V1 = harmonic_phasor(np.asarray(v)[:n], f0, fs)
    if abs(I1) <= EPS or abs(V1) <= EPS:
        raise DegenerateSignalError("fundamental component too small to define a phase")
    return wrap_phase(np.angle(I1) - np.angle(V1))


def _cycle_bounds(n: int, fs: float, f0: float) -> np.ndarray:
    spc = fs / f0
    count = int(math.floor(n / spc + 1e-9))
    return np.rint(np.arange(count + 1) * spc).astype(np.int64)


def cycle_rms(x, fs: float, f0: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    b = _cycle_bounds(len(x), fs, f0)
    return np.array([rms(x[b[k] : b[k + 1]]) for k in range(len(b) - 1)])


@dataclass(frozen=True)
class TransientSplit:
    """Cycle-aligned split of a record into switch-on transient and steady state.

    ``transient`` and ``steady`` are sample slices into the record.
    """

    transient: slice
    steady: slice
    onset_cycle: int
    settle_cycle: int | None
    settled: bool


def extract_transient(
    rec: WaveformRecord,
    settle_cycles: int = SETTLE_CYCLES,
    tolerance: float = SETTLE_TOLERANCE,
    on_floor: float | None = None,
) -> TransientSplit:
    """Locate the switch-on transient from per-cycle current RMS.

    Onset is the first cycle whose RMS exceeds ``on_floor`` (default: 10% of the
    largest cycle RMS). The transient always holds the onset cycle and ends at the
    first later cycle from which ``settle_cycles`` consecutive RMS values stay
    within ``tolerance`` of their median; the steady part is the rest.
    """
    crms = cycle_rms(rec.current, rec.fs, rec.f0)
    if len(crms) < 2:
        raise ValueError("record shorter than two mains cycles")
    if on_floor is None:
        on_floor = max(ON_FLOOR_FRACTION * float(crms.max()), EPS)
    above = np.flatnonzero(crms > on_floor)
    if len(above) == 0:
        raise DegenerateSignalError("no switch-on found: current never exceeds the on-floor")
    onset = int(above[0])
    bounds = _cycle_bounds(len(rec.current), rec.fs, rec.f0)
    start = int(bounds[onset])
    for c in range(onset + 1, len(crms) - settle_cycles + 1):
        block = crms[c : c + settle_cycles]
        med = float(np.median(block))
        if np.all(np.abs(block - med) <= tolerance * med):
            cut = int(bounds[c])
            return TransientSplit(slice(start, cut), slice(cut, int(bounds[-1])), onset, c, True)
    log.warning("current never settled; treating the whole post-onset signal as transient")
    return TransientSplit(slice(start, int(bounds[-1])), slice(int(bounds[-1]), int(bounds[-1])), onset, None, False)


# Fixed feature list; harmonic and VI pixel names are generated below.
SCALAR_FEATURES = (
    "i_rms",
    "v_rms",
    "active_power",
    "apparent_power",
    "reactive_power",
    "power_factor",
    "thd_i",
    *(f"harmonic_{h}" for h in ODD_HARMONICS),
    "i_mean",
    "i_std",
    "i_skewness",
    "i_kurtosis",
    "crest_factor",
    "form_factor",
    "phase_shift",
    "spectral_centroid",
    "spectral_rolloff",
    "spectral_flatness",
    "zero_crossing_rate",
)
TRANSIENT_EXTRAS = ("inrush_ratio", "transient_duration")
VI_FEATURES = tuple(f"vi_{r}_{c}" for r in range(VI_SIZE) for c in range(VI_SIZE))


def feature_names(mode: str) -> tuple[str, ...]:
    if mode == "steady":
        return SCALAR_FEATURES + VI_FEATURES
    if mode == "transient":
        return SCALAR_FEATURES + TRANSIENT_EXTRAS + VI_FEATURES
    raise ValueError(f"mode must be 'transient' or 'steady', got {mode!r}")


@dataclass(frozen=True)
class FeatureVector:
    mode: str
    names: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


def _average_cycle(x, fs, f0, points: int) -> np.ndarray:
    b = _cycle_bounds(len(x), fs, f0)
    cycles = []
    for k in range(len(b) - 1):
        seg = x[b[k] : b[k + 1]]
        grid = np.linspace(0, len(seg) - 1, points)
        cycles.append(np.interp(grid, np.arange(len(seg)), seg))
    return np.mean(cycles, axis=0)


def vi_image(i, v, f0: float, fs: float, size: int = VI_SIZE) -> np.ndarray:
    """Binary ``size x size`` raster of the averaged V-I trajectory (rows = current)."""
    points = max(int(round(fs / f0)), 8)
    vc = _average_cycle(np.asarray(v, dtype=np.float64), fs, f0, points)
    ic = _average_cycle(np.asarray(i, dtype=np.float64), fs, f0, points)
    # densify so the raster traces a connected path
    t = np.linspace(0, points - 1, 8 * points)
    vc = np.interp(t, np.arange(points), vc)
    ic = np.interp(t, np.arange(points), ic)

    def scale(a):
        span = a.max() - a.min()
        return np.full_like(a, 0.5) if span <= EPS else (a - a.min()) / span

    cols = np.minimum((scale(vc) * size).astype(int), size - 1)
    rows = np.minimum((scale(ic) * size).astype(int), size - 1)
    img = np.zeros((size, size), dtype=np.float64)
    img[size - 1 - rows, cols] = 1.0
    return img


def _spectral_features(x, fs) -> tuple[float, float, float]:
    mag = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(len(x), 1.0 / fs)
    power = mag**2
    total = power.sum()
    if total <= EPS:
        return 0.0, 0.0, 0.0
    centroid = float(np.sum(freqs * mag) / np.sum(mag))
    cum = np.cumsum(power)
    rolloff = float(freqs[np.searchsorted(cum, 0.85 * total)])
    pos = power[power > 0]
    flatness = float(np.exp(np.mean(np.log(pos))) / np.mean(power))
    return centroid, rolloff, flatness


def compute_feature_vector(
    i,
    v,
    f0: float,
    fs: float,
    mode: str = "steady",
    reference_rms: float | None = None,
) -> FeatureVector:
    """Compute the fixed feature list over one waveform segment.

    For ``mode="transient"`` the inrush ratio is the peak cycle RMS of the
    segment over ``reference_rms`` (usually the steady-state cycle RMS; defaults
    to the segment's last cycle).
    """
    names = feature_names(mode)
    n = whole_cycles(min(len(i), len(v)), fs, f0)
    if n == 0:
        raise DegenerateSignalError("segment shorter than one mains cycle")
    if fs <= 2 * MAX_HARMONIC * f0:
        raise ValueError(f"fs={fs} Hz too low to resolve harmonic {MAX_HARMONIC} of {f0} Hz")
    i = np.asarray(i, dtype=np.float64)[:n]
    v = np.asarray(v, dtype=np.float64)[:n]

    i_rms, v_rms = rms(i), rms(v)
    p = float(np.mean(v * i))
    s = i_rms * v_rms
    ff = form_factor(i)
    phase = fundamental_phase_shift(i, v, f0, fs)
    I = [harmonic_phasor(i, h * f0, fs) for h in range(1, MAX_HARMONIC + 1)]
    V1 = harmonic_phasor(v, f0, fs)
    i1 = abs(I[0])
    # phasors are peak-normalized; halve for RMS product
    q = 0.5 * abs(V1) * i1 * math.sin(np.angle(V1) - np.angle(I[0]))
    thd = math.sqrt(sum(abs(x) ** 2 for x in I[1:])) / i1
    harmonics = [abs(I[h - 1]) / i1 for h in ODD_HARMONICS]

    mean, std = float(np.mean(i)), float(np.std(i))
    if std > EPS:
        z = (i - mean) / std
        skew, kurt = float(np.mean(z**3)), float(np.mean(z**4))
    else:
        skew, kurt = 0.0, 0.0
    crest = float(np.max(np.abs(i))) / i_rms
    centroid, rolloff, flatness = _spectral_features(i, fs)
    signs = np.signbit(i)
    zcr = float(np.count_nonzero(signs[1:] != signs[:-1])) / (len(i) / fs)

    vals = [i_rms, v_rms, p, s, q, abs(p) / s, thd, *harmonics, mean, std, skew, kurt, crest, ff, phase,
            centroid, rolloff, flatness, zcr]
    if mode == "transient":
        crms = cycle_rms(i, fs, f0)
        ref = reference_rms if reference_rms else float(crms[-1])
        vals += [float(crms.max()) / max(ref, EPS), n / fs]
    vals += list(vi_image(i, v, f0, fs).ravel())
    return FeatureVector(mode, names, np.asarray(vals, dtype=np.float64))


def record_features(rec: WaveformRecord) -> dict[str, FeatureVector]:
    """Transient and steady feature vectors for one switch-on record."""
    split = extract_transient(rec)
    i, v = rec.current, rec.voltage
    steady_i, steady_v = i[split.steady], v[split.steady]
    spc = rec.samples_per_cycle
    if len(steady_i) < spc:
        # never settled: use the trailing cycles as the steady reference
        tail = int(math.ceil(SETTLE_CYCLES * spc))
        steady_i, steady_v = i[-tail:], v[-tail:]
    steady = compute_feature_vector(steady_i, steady_v, rec.f0, rec.fs, "steady")
    ti, tv = i[split.transient], v[split.transient]
    if len(ti) < spc:
        ti, tv = i[split.transient.start : split.transient.start + int(math.ceil(spc))], v[
            split.transient.start : split.transient.start + int(math.ceil(spc))
        ]
    transient = compute_feature_vector(ti, tv, rec.f0, rec.fs, "transient", reference_rms=steady["i_rms"])
    return {"transient": transient, "steady": steady}


def hf_channel_series(
    rec: WaveformRecord, period: float = CANONICAL_PERIOD, current_floor: float = 1e-3
) -> tuple[MultivariateSeries, np.ndarray]:
    """Reduce a long waveform to 6 s (power, form factor, phase shift) rows.

    Slots whose current RMS is below ``current_floor`` get the neutral values
    (1.0, 0.0) for the two waveform channels; the returned boolean array flags them.
    """
    slot = rec.fs * period
    if not math.isclose(slot, round(slot), abs_tol=1e-6):
        raise ValueError(f"fs * period = {slot} is not an integer sample count")
    slot = int(round(slot))
    count = len(rec.current) // slot
    if count == 0:
        raise ValueError("record shorter than one slot")
    power, ff, phase, flags = [], [], [], []
    for k in range(count):
        i = rec.current[k * slot : (k + 1) * slot]
        v = rec.voltage[k * slot : (k + 1) * slot]
        power.append(float(np.mean(v * i)))
        try:
            if rms(i) < current_floor:
                raise DegenerateSignalError("current below floor")
            ff.append(form_factor(i))
            phase.append(fundamental_phase_shift(i, v, rec.f0, rec.fs))
            flags.append(False)
        except DegenerateSignalError:
            ff.append(1.0)
            phase.append(0.0)
            flags.append(True)
    series = MultivariateSeries(rec.start_time, period, dict(zip(HF_CHANNELS, (power, ff, phase))))
    return series, np.array(flags, dtype=bool)


def read_waveform(sidecar) -> WaveformRecord:
    """Load a waveform from its JSON sidecar and the float32 payload next to it.

    The payload is ``<stem>.bin`` unless the sidecar names one under ``payload``.
    """
    sidecar = Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{sidecar}: invalid JSON sidecar ({exc})") from None
    for key in ("fs_hz", "f0_hz", "channels"):
        if key not in meta:
            raise ValueError(f"{sidecar}: sidecar is missing {key!r}")
    if list(meta["channels"]) != ["voltage", "current"]:
        raise ValueError(f"{sidecar}: channels must be ['voltage', 'current']")
    payload = sidecar.with_name(meta.get("payload", sidecar.stem + ".bin"))
    raw = payload.read_bytes()
    if len(raw) % 8:
        raise ValueError(f"{payload}: byte length {len(raw)} is not a whole number of (v, i) float32 pairs")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 2)
    return WaveformRecord(
        fs=float(meta["fs_hz"]),
        f0=float(meta["f0_hz"]),
        voltage=data[:, 0],
        current=data[:, 1],
        label=meta.get("label"),
        start_time=float(meta.get("start_unix_s", 0.0)),
    )


def write_waveform(rec: WaveformRecord, sidecar) -> None:
    sidecar = Path(sidecar)
    meta = {
        "fs_hz": rec.fs,
        "f0_hz": rec.f0,
        "channels": ["voltage", "current"],
        "start_unix_s": rec.start_time,
    }
    if rec.label is not None:
        meta["label"] = rec.label
    sidecar.write_text(json.dumps(meta, indent=2))
    inter = np.stack([rec.voltage, rec.current], axis=1).astype("<f4")
    sidecar.with_name(sidecar.stem + ".bin").write_bytes(inter.tobytes())
