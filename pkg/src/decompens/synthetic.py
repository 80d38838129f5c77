"""Seeded synthetic traffic-flow series."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .signal_core import TimeSeries

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class SyntheticSpec:
    """Daily cycle with a half-day harmonic, linear trend, Gaussian noise and
    occasional decaying spikes. Flows are clipped at zero."""

    days: float = 30.0
    interval_minutes: float = 1.0
    base: float = 20.0
    daily_amplitude: float = 12.0
    harmonic_amplitude: float = 4.0
    trend_per_day: float = 0.05
    noise_std: float = 3.0
    spike_rate_per_day: float = 1.0
    spike_height: float = 15.0
    spike_minutes: float = 5.0
    seed: int | None = None

    def __post_init__(self):
        if self.days <= 0 or self.interval_minutes <= 0:
            raise ValueError("days and interval_minutes must be positive")
        if self.noise_std < 0 or self.spike_rate_per_day < 0 or self.spike_minutes <= 0:
            raise ValueError("noise, spike rate and spike duration must be non-negative")

    def to_dict(self):
        return asdict(self)


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed=None) -> TimeSeries:
    """``seed`` overrides ``spec.seed``; one of them must be set."""
    seed = spec.seed if seed is None else seed
    if seed is None:
        raise ValueError("a seed is required")
    rng = np.random.default_rng([int(seed), 1009])
    n = int(round(spec.days * MINUTES_PER_DAY / spec.interval_minutes))
    minutes = np.arange(n) * spec.interval_minutes
    phase = 2 * np.pi * minutes / MINUTES_PER_DAY
    flow = (spec.base
            + spec.trend_per_day * minutes / MINUTES_PER_DAY
            + spec.daily_amplitude * np.sin(phase - np.pi / 2)
            + spec.harmonic_amplitude * np.sin(2 * phase)
            + spec.noise_std * rng.standard_normal(n))
    n_spikes = rng.poisson(spec.spike_rate_per_day * spec.days)
    starts = np.sort(rng.integers(0, n, n_spikes))
    heights = spec.spike_height * rng.uniform(0.5, 1.5, n_spikes)
    decay = spec.spike_minutes / spec.interval_minutes
    span = int(np.ceil(5 * decay))
    shape = np.exp(-np.arange(span) / decay)
    for s0, h in zip(starts, heights):
        seg = slice(s0, min(n, s0 + span))
        flow[seg] += h * shape[:seg.stop - s0]
    return TimeSeries(np.clip(flow, 0.0, None), spec.interval_minutes, 0,
                      {"synthetic": {**spec.to_dict(), "seed": int(seed)}})
