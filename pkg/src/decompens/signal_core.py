"""Extrema detection, envelopes, sifting and plain EMD of a single sequence."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InsufficientExtrema, SeriesTooShort

SPLINE_KINDS = ("akima", "cubic", "linear")
_MIRRORED = 2


@dataclass
class TimeSeries:
    """Uniformly sampled scalar series (e.g. vehicles per interval)."""

    values: np.ndarray
    interval_minutes: float = 1.0
    origin_index: int = 0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size == 0:
            raise ValueError("TimeSeries needs at least one value")
        if not self.interval_minutes > 0:
            raise ValueError("interval_minutes must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("TimeSeries values must be finite")

    def __len__(self):
        return self.values.size

    def slice(self, start, stop):
        return TimeSeries(self.values[start:stop], self.interval_minutes,
                          self.origin_index + start)


class ExtremaSet(NamedTuple):
    max_idx: np.ndarray
    max_val: np.ndarray
    min_idx: np.ndarray
    min_val: np.ndarray

    @property
    def maxima(self):
        return list(zip(self.max_idx.tolist(), self.max_val.tolist()))

    @property
    def minima(self):
        return list(zip(self.min_idx.tolist(), self.min_val.tolist()))

    @property
    def total(self):
        return self.max_idx.size + self.min_idx.size


class EnvelopePair(NamedTuple):
    upper: np.ndarray
    lower: np.ndarray
    mean: np.ndarray


@dataclass
class SiftConfig:
    spline_kind: str = "akima"
    max_sift_iterations: int = 50
    mean_tolerance: float = 0.05
    max_imfs: int = 12
    # stop once the residual has at most this many extrema
    residue_extrema: int = 1

    def __post_init__(self):
        if self.spline_kind not in SPLINE_KINDS:
            raise ValueError(f"spline_kind must be one of {SPLINE_KINDS}")
        if self.max_sift_iterations < 1:
            raise ValueError("max_sift_iterations must be >= 1")
        if not self.mean_tolerance > 0:
            raise ValueError("mean_tolerance must be positive")
        if self.max_imfs < 1:
            raise ValueError("max_imfs must be >= 1")


@dataclass
class Decomposition:
    """IMFs (rows, highest frequency first) plus the residue."""

    imfs: np.ndarray
    residue: np.ndarray
    method_tag: str = "EMD"
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def n_imfs(self):
        return self.imfs.shape[0]

    def reconstruct(self):
        return self.imfs.sum(axis=0) + self.residue


class ImfCheck(NamedTuple):
    ok: bool
    n_extrema: int
    n_zero_crossings: int
    mean_ratio: float

    def __bool__(self):
        return self.ok


def _values(series):
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64).reshape(-1)


def find_extrema(series) -> ExtremaSet:
    """Strict interior local maxima/minima; plateaus report their middle index."""
    x = _values(series)
    if x.size < 3:
        raise SeriesTooShort(f"need at least 3 points, got {x.size}")
    imax, imin = kernels.extrema_indices(x)
    return ExtremaSet(imax, x[imax], imin, x[imin])


def count_zero_crossings(series) -> int:
    return kernels.zero_crossings(_values(series))


def choose_spline(kind, n_knots):
    """Walk the akima -> cubic -> linear ladder until the knot count suffices."""
    code = kernels.spline_code(n_knots, kernels.SPLINE_CODES[kind])
    if code < 0:
        raise InsufficientExtrema(f"{n_knots} knots cannot support any spline")
    return SPLINE_KINDS[code]


def interpolate_envelope(knot_x, knot_y, n, kind="akima"):
    """Interpolate knots over sample positions 0..n-1 with the fallback ladder."""
    choose_spline(kind, len(knot_x))
    return kernels.spline_eval(kernels.SPLINE_CODES[kind], np.asarray(knot_x, dtype=np.float64),
                               np.asarray(knot_y, dtype=np.float64), n)


def build_envelopes(series, extrema: ExtremaSet, config: SiftConfig) -> EnvelopePair:
    x = _values(series)
    n = x.size
    if extrema.max_idx.size == 0 or extrema.min_idx.size == 0:
        raise InsufficientExtrema("need at least one maximum and one minimum")
    ux, uy = kernels.mirror_knots(extrema.max_idx, extrema.max_val, n, _MIRRORED)
    lx, ly = kernels.mirror_knots(extrema.min_idx, extrema.min_val, n, _MIRRORED)
    upper = interpolate_envelope(ux, uy, n, config.spline_kind)
    lower = interpolate_envelope(lx, ly, n, config.spline_kind)
    return EnvelopePair(upper, lower, (upper + lower) / 2.0)


def mean_envelope(x, config: SiftConfig):
    return build_envelopes(x, find_extrema(x), config).mean


def sift_once(series, config: SiftConfig) -> np.ndarray:
    x = _values(series)
    return x - mean_envelope(x, config)


def _check(h, mean, config, ext=None):
    if ext is None:
        ext = find_extrema(h)
    n_ext = ext.total
    n_zc = kernels.zero_crossings(h)
    span = h.max() - h.min()
    peak = np.abs(mean).max()
    ratio = peak / span if span > 0 else (0.0 if peak == 0 else np.inf)
    ok = abs(n_ext - n_zc) <= 1 and ratio <= config.mean_tolerance
    return ImfCheck(bool(ok), int(n_ext), int(n_zc), float(ratio))


def is_imf(candidate, config: SiftConfig) -> ImfCheck:
    """Check the extrema/zero-crossing balance and the mean-envelope size.

    When envelopes cannot be built the candidate itself stands in for its
    mean envelope, so e.g. a ramp fails the second condition.
    """
    h = _values(candidate)
    ext = find_extrema(h)
    try:
        mean = build_envelopes(h, ext, config).mean
    except InsufficientExtrema:
        mean = h
    return _check(h, mean, config, ext)


def _sift(x, config, max_imfs):
    return kernels.emd_imfs(x, kernels.SPLINE_CODES[config.spline_kind],
                            config.max_sift_iterations, config.mean_tolerance,
                            max_imfs, config.residue_extrema)


def first_imf(x, config: SiftConfig):
    """First IMF of ``x`` or ``None`` when ``x`` has too few extrema."""
    x = _values(x)
    if x.size < 3:
        return None
    imfs = _sift(x, config, 1)[0]
    return imfs[0] if imfs.shape[0] else None


def emd(series, config: SiftConfig | None = None) -> Decomposition:
    """Plain empirical mode decomposition by repeated sifting.

    Each IMF is sifted until :func:`is_imf` accepts it or
    ``max_sift_iterations`` is reached (then it is kept and flagged in
    ``diagnostics["force_accepted"]``). Extraction stops once the residual
    has at most ``residue_extrema`` extrema.
    """
    config = config or SiftConfig()
    s = _values(series)
    if s.size < 4:
        raise SeriesTooShort(f"EMD needs at least 4 points, got {s.size}")
    imfs, iterations, forced = _sift(s, config, config.max_imfs)
    residue = s - imfs.sum(axis=0)
    return Decomposition(imfs, residue, "EMD",
                         {"sift_iterations": list(iterations), "force_accepted": list(forced)})
