"""Uniformly sampled power series, resampling and windowing.

Series carry an implicit time grid (``start_time + k * period``), so gaps in the
source data have to be split out at ingestion time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

CANONICAL_PERIOD = 6.0

# minutes of signal seen by the networks for each appliance
WINDOW_MINUTES = {
    "kettle": 13,
    "fridge": 60,
    "washing": 180,
    "microwave": 10,
    "dishwasher": 150,
}

POWER_CHANNEL = "power_w"
HF_CHANNELS = ("power_w", "form_factor", "phase_shift_rad")

LF_HEADER = ("timestamp_unix_s", "active_power_w")
HF_HEADER = ("timestamp_unix_s", "active_power_w", "form_factor", "phase_shift_rad")


class SeriesFormatError(ValueError):
    """Raised for malformed series files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PowerSeries:
    start_time: float
    period: float
    values: np.ndarray

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        values = _frozen(self.values)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("power series contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.period * np.arange(len(self.values))

    @property
    def end_time(self) -> float:
        """Timestamp one period past the last sample."""
        return self.start_time + self.period * len(self.values)

    def segment(self, start: int, stop: int) -> "PowerSeries":
        start, stop = max(0, start), min(len(self), stop)
        return PowerSeries(self.start_time + start * self.period, self.period, self.values[start:stop])


@dataclass(frozen=True)
class MultivariateSeries:
    start_time: float
    period: float
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if POWER_CHANNEL not in self.channels:
            raise ValueError(f"multivariate series needs a {POWER_CHANNEL!r} channel")
        chans = {name: _frozen(v) for name, v in self.channels.items()}
        lengths = {len(v) for v in chans.values()}
        if len(lengths) != 1:
            raise ValueError(f"channels have unequal lengths: {sorted(lengths)}")
        for name, v in chans.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"channel {name!r} contains non-finite values")
        object.__setattr__(self, "channels", chans)

    def __len__(self) -> int:
        return len(self.channels[POWER_CHANNEL])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.channels)

    @property
    def power(self) -> PowerSeries:
        return PowerSeries(self.start_time, self.period, self.channels[POWER_CHANNEL])

    def stack(self, names: tuple[str, ...] | None = None) -> np.ndarray:
        """Return a (length, n_channels) array in the requested channel order."""
        names = names or self.names
        return np.stack([self.channels[n] for n in names], axis=1)

    def segment(self, start: int, stop: int) -> "MultivariateSeries":
        start, stop = max(0, start), min(len(self), stop)
        return MultivariateSeries(
            self.start_time + start * self.period,
            self.period,
            {k: v[start:stop] for k, v in self.channels.items()},
        )

    @classmethod
    def from_power(cls, series: PowerSeries) -> "MultivariateSeries":
        return cls(series.start_time, series.period, {POWER_CHANNEL: series.values})


@dataclass(frozen=True)
class Window:
    """Index window ``[offset, offset + length)`` into a series."""

    offset: int
    length: int

    @property
    def stop(self) -> int:
        return self.offset + self.length


def window_length_for(appliance: str, period: float = CANONICAL_PERIOD) -> int:
    """Number of samples in the network window for ``appliance``.

    >>> window_length_for("kettle", 6.0)
    130
    """
    try:
        minutes = WINDOW_MINUTES[appliance]
    except KeyError:
        raise KeyError(f"unknown appliance {appliance!r}; expected one of {sorted(WINDOW_MINUTES)}") from None
    seconds = minutes * 60
    samples = seconds / period
    if not math.isclose(samples, round(samples), abs_tol=1e-9):
        raise ValueError(f"period {period} s does not divide {minutes} min evenly")
    return int(round(samples))


def resample_foh(series: PowerSeries, target_period: float) -> PowerSeries:
    """Upsample with a first-order hold (linear interpolation).

    The output grid starts at the first source sample and stops at or before the
    last one, so it has ``floor((n - 1) * src / target) + 1`` samples.
    """
    if target_period <= 0:
        raise ValueError("target_period must be positive")
    n = len(series)
    if n == 0:
        raise ValueError("cannot resample an empty series")
    if target_period >= series.period:
        raise ValueError("first-order hold only upsamples: target_period must be below the source period")
    if n == 1:
        return PowerSeries(series.start_time, target_period, series.values)
    n_out = int(math.floor((n - 1) * series.period / target_period + 1e-9)) + 1
    # positions in source-index units; exact at source instants when the ratio is integral
    pos = np.arange(n_out) * target_period / series.period
    values = np.interp(pos, np.arange(n, dtype=np.float64), series.values)
    return PowerSeries(series.start_time, target_period, values)


def slice_window(series, offset: int, length: int) -> np.ndarray:
    """Return the samples ``[offset, offset + length)`` of a series or array.

    For a :class:`MultivariateSeries` the result is ``(length, n_channels)``.
    """
    if isinstance(series, MultivariateSeries):
        data = series.stack()
    elif isinstance(series, PowerSeries):
        data = series.values
    else:
        data = np.asarray(series)
    n = len(data)
    if offset < 0 or length < 0 or offset + length > n:
        raise IndexError(f"window [{offset}, {offset + length}) out of range for length {n}")
    return data[offset : offset + length]


def split_on_gaps(timestamps: np.ndarray, columns: np.ndarray, period: float) -> list[tuple[float, np.ndarray]]:
    """Split irregular rows into contiguous runs on a fixed grid.

    A single missing sample is filled by linear interpolation; anything longer
    starts a new run. Returns ``(start_time, values)`` pairs, values shaped
    ``(n, n_columns)``.
    """
    steps = np.rint(np.diff(timestamps) / period).astype(np.int64)
    runs: list[tuple[float, np.ndarray]] = []
    start = 0
    pieces = [columns[:1]]
    for k, step in enumerate(steps):
        if step == 1:
            pieces.append(columns[k + 1 : k + 2])
        elif step == 2:
            pieces.append(0.5 * (columns[k : k + 1] + columns[k + 1 : k + 2]))
            pieces.append(columns[k + 1 : k + 2])
        else:
            runs.append((float(timestamps[start]), np.concatenate(pieces)))
            start = k + 1
            pieces = [columns[k + 1 : k + 2]]
    runs.append((float(timestamps[start]), np.concatenate(pieces)))
    return runs


def _read_rows(path: Path, header: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SeriesFormatError("empty file", line=1) from None
        if tuple(h.strip() for h in got) != header:
            raise SeriesFormatError(f"expected header {','.join(header)}, got {','.join(got)}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SeriesFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise SeriesFormatError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise SeriesFormatError("non-finite value", line=lineno)
            if rows and vals[0] <= rows[-1][0]:
                raise SeriesFormatError("timestamps must be strictly increasing", line=lineno)
            rows.append(vals)
    if not rows:
        raise SeriesFormatError("no data rows", line=2)
    data = np.array(rows, dtype=np.float64)
    return data[:, 0], data[:, 1:]


def _infer_period(timestamps: np.ndarray, period: float | None) -> float:
    if period is not None:
        return float(period)
    if len(timestamps) < 2:
        return CANONICAL_PERIOD
    return float(np.median(np.diff(timestamps)))


def read_power_csv(path, period: float | None = None, target_period: float | None = CANONICAL_PERIOD) -> list[PowerSeries]:
    """Load a ``timestamp_unix_s,active_power_w`` file as contiguous series.

    Coarser data is upsampled to ``target_period`` with a first-order hold;
    pass ``target_period=None`` to keep the native grid.
    """
    ts, cols = _read_rows(Path(path), LF_HEADER)
    src_period = _infer_period(ts, period)
    out = []
    for start, values in split_on_gaps(ts, cols, src_period):
        s = PowerSeries(start, src_period, values[:, 0])
        if target_period is not None and src_period > target_period + 1e-9 and len(s) > 1:
            s = resample_foh(s, target_period)
        out.append(s)
    return out


def read_multivariate_csv(path, period: float | None = None) -> list[MultivariateSeries]:
    ts, cols = _read_rows(Path(path), HF_HEADER)
    src_period = _infer_period(ts, period)
    return [
        MultivariateSeries(start, src_period, dict(zip(HF_CHANNELS, values.T)))
        for start, values in split_on_gaps(ts, cols, src_period)
    ]


def write_power_csv(series: PowerSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LF_HEADER)
        for t, v in zip(series.times, series.values):
            w.writerow((repr(float(t)), repr(float(v))))


def write_multivariate_csv(series: MultivariateSeries, path) -> None:
    data = series.stack(HF_CHANNELS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HF_HEADER)
        for t, row in zip(series.start_time + series.period * np.arange(len(series)), data):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
