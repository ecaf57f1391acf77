"""Per-SFC request-rate series at 1 s slot resolution."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

HOURS_PER_WEEK = 168
DEFAULT_SECONDS_PER_HOUR = 5


@dataclass(frozen=True, eq=False)
class TrafficSeries:
    """Requests per second, one value per slot."""

    rates: np.ndarray
    slot_duration_s: int = 1

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        rates.setflags(write=False)
        if rates.ndim != 1 or rates.size < 1:
            raise InvalidArgumentError("traffic series needs at least one slot")
        if (rates < 0).any() or not np.isfinite(rates).all():
            raise InvalidArgumentError("traffic rates must be finite and non-negative")
        object.__setattr__(self, "rates", rates)

    def __len__(self) -> int:
        return self.rates.size

    def rate(self, t: int) -> float:
        return float(self.rates[t])


@dataclass(frozen=True)
class HourlyTrace:
    """Requests per hour over one week."""

    requests_per_hour: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.requests_per_hour)
        if len(values) != HOURS_PER_WEEK:
            raise InvalidArgumentError(f"trace must have {HOURS_PER_WEEK} hours, got {len(values)}")
        if any(v < 0 for v in values):
            raise InvalidArgumentError("trace values must be non-negative")
        object.__setattr__(self, "requests_per_hour", values)

    def as_array(self) -> np.ndarray:
        return np.array(self.requests_per_hour)


def linear_ramp(start_rps: float, end_rps: float, duration_s: int) -> TrafficSeries:
    if duration_s < 1 or start_rps < 0 or end_rps < 0:
        raise InvalidArgumentError("ramp needs duration >= 1 and non-negative rates")
    if duration_s == 1:
        return TrafficSeries(np.array([float(start_rps)]))
    t = np.arange(duration_s)
    rates = start_rps + (end_rps - start_rps) * t / (duration_s - 1)
    rates[-1] = end_rps
    return TrafficSeries(rates)


def rotate_trace(trace: HourlyTrace, phase_shift_fraction: float) -> HourlyTrace:
    """Circular shift so that output hour 0 is input hour ``round(168 * fraction)``."""
    if not 0 <= phase_shift_fraction < 1:
        raise InvalidArgumentError("phase shift fraction must be in [0, 1)")
    shift = round(HOURS_PER_WEEK * phase_shift_fraction)
    return HourlyTrace(tuple(np.roll(trace.as_array(), -shift)))


def trace_to_series(
    trace: HourlyTrace,
    scale: float = 1.0,
    phase_shift_fraction: float = 0.0,
    seconds_per_hour_compressed: int = DEFAULT_SECONDS_PER_HOUR,
) -> TrafficSeries:
    """Render an hourly trace as a compressed per-second series.

    Each hour's request count is converted to a per-second rate, scaled, and
    held constant for ``seconds_per_hour_compressed`` slots.
    """
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    if seconds_per_hour_compressed < 1:
        raise InvalidArgumentError("need at least one slot per hour")
    hourly = rotate_trace(trace, phase_shift_fraction).as_array() / 3600.0 * scale
    return TrafficSeries(np.repeat(hourly, seconds_per_hour_compressed))


def synth_week_trace(seed: int = 0) -> HourlyTrace:
    """Deterministic diurnal week: weekday daytime peaks, night troughs, quieter weekends."""
    rng = np.random.default_rng(seed)
    hours = np.arange(HOURS_PER_WEEK)
    hour_of_day = hours % 24
    day = hours // 24
    # cosine bump peaking at 14:00, trough at 02:00
    diurnal = 0.5 * (1.0 - np.cos(2 * np.pi * (hour_of_day - 2) / 24.0))
    weekday = np.where(day < 5, 1.0, 0.6)
    trough_rps, peak_rps = 2.0, 18.0
    rps = trough_rps + (peak_rps - trough_rps) * diurnal**1.5 * weekday
    rps *= 1.0 + 0.03 * rng.standard_normal(HOURS_PER_WEEK)
    return HourlyTrace(tuple(np.maximum(rps, 0.0) * 3600.0))


def read_trace_csv(path: str | Path) -> HourlyTrace:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["hour", "requests"]:
            raise InvalidArgumentError(f"{path}: expected header 'hour,requests'")
        rows = sorted((int(r["hour"]), float(r["requests"])) for r in reader)
    if [h for h, _ in rows] != list(range(HOURS_PER_WEEK)):
        raise InvalidArgumentError(f"{path}: hours must be 0..167")
    return HourlyTrace(tuple(v for _, v in rows))


def write_trace_csv(trace: HourlyTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "requests"])
        for h, v in enumerate(trace.requests_per_hour):
            w.writerow([h, repr(v)])
