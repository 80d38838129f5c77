"""Ingestion, chronological splits, windowing, bagging and decompose-then-slice."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (DecompositionError, EmptyFile, HorizonTooLong, IoFailure, MissingColumn,
                     NonUniformInterval, SeriesTooShort)
from .noise_ensembles import NoiseConfig, decompose
from .signal_core import SiftConfig, TimeSeries

logger = logging.getLogger(__name__)

LEAKAGE_MODES = ("faithful", "strict")


# --------------------------------------------------------------------------
# ingestion

def _parse_stamp(text):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        # naive stamps are read as UTC so results do not depend on the host zone
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _read_rows(path, timestamp_col, flow_col, site_col, site):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path} is empty")
        for col in (timestamp_col, flow_col) + ((site_col,) if site_col else ()):
            if col not in reader.fieldnames:
                raise MissingColumn(f"column {col!r} not in {path}")
        stamps, flows = [], []
        for row in reader:
            if site_col and site is not None and row[site_col] != str(site):
                continue
            stamps.append(_parse_stamp(row[timestamp_col]))
            flows.append(float(row[flow_col]))
    if not stamps:
        raise EmptyFile(f"{path} has no data rows")
    return np.array(stamps), np.array(flows)


def _regularize(stamps, flows, max_fill):
    """Place samples on the native grid; returns values, interval, gap report."""
    if stamps.size > 1 and np.any(np.diff(stamps) <= 0):
        raise NonUniformInterval("timestamps must be strictly increasing")
    if stamps.size == 1:
        return flows, 60.0, []
    step = float(np.median(np.diff(stamps)))
    offsets = (stamps - stamps[0]) / step
    pos = np.rint(offsets).astype(np.int64)
    if np.any(np.abs(offsets - pos) > 1e-6):
        raise NonUniformInterval("timestamps are not on a uniform grid")
    gaps = []
    for i in np.flatnonzero(np.diff(pos) > 1):
        gaps.append((int(pos[i]) + 1, int(pos[i + 1] - pos[i] - 1)))
    values = np.full(int(pos[-1]) + 1, np.nan)
    values[pos] = flows
    return values, step, gaps


def ingest_csv(path, timestamp_col="timestamp", flow_col="flow",
               site_col=None, site=None, max_fill=1) -> TimeSeries:
    """Read a flow series from CSV onto a uniform grid.

    Gaps of up to ``max_fill`` missing samples are linearly interpolated and
    listed in ``series.meta["filled"]``; longer gaps raise
    :class:`NonUniformInterval` (use :func:`ingest_segments` to split instead).
    """
    segments = ingest_segments(path, timestamp_col, flow_col, site_col, site, max_fill)
    if len(segments) > 1:
        raise NonUniformInterval(
            f"gap longer than {max_fill} sample(s) at index {segments[1].origin_index}")
    return segments[0]


def ingest_segments(path, timestamp_col="timestamp", flow_col="flow",
                    site_col=None, site=None, max_fill=1):
    stamps, flows = _read_rows(path, timestamp_col, flow_col, site_col, site)
    if not np.all(np.isfinite(flows)):
        raise ValueError("flow column contains non-finite values")
    if np.any(flows < 0):
        raise ValueError("flow column contains negative values")
    values, step, gaps = _regularize(stamps, flows, max_fill)
    filled, splits = [], []
    for start, length in gaps:
        if length <= max_fill:
            filled.append((start, length))
        else:
            splits.append((start, length))
    missing = np.isnan(values)
    if filled:
        known = np.flatnonzero(~missing)
        fill_idx = np.concatenate([np.arange(s, s + n) for s, n in filled])
        values[fill_idx] = np.interp(fill_idx, known, values[known])
    bounds = [0]
    for start, length in splits:
        bounds += [start, start + length]
    bounds.append(values.size)
    out = []
    for a, b in zip(bounds[::2], bounds[1::2]):
        ts = TimeSeries(values[a:b], step / 60.0, a)
        ts.meta["filled"] = [(s - a, n) for s, n in filled if a <= s < b]
        ts.meta["source"] = str(path)
        out.append(ts)
    return out


def write_csv(series: TimeSeries, path, start_epoch=0.0):
    """Write ``timestamp,flow`` rows with epoch-second stamps."""
    step = series.interval_minutes * 60.0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "flow"])
        for i, v in enumerate(series.values):
            w.writerow([f"{start_epoch + (series.origin_index + i) * step:.0f}", repr(float(v))])


# --------------------------------------------------------------------------
# splitting and windows

@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    validation: float = 0.1
    test: float = 0.2

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if any(not f > 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must be positive and sum to 1")


def chronological_split(series: TimeSeries, spec: SplitSpec = SplitSpec(), min_length=1):
    n = len(series)
    # tolerance guards against 0.7 + 0.1 landing just below 0.8
    b1 = math.floor(spec.train * n + 1e-9)
    b2 = math.floor((spec.train + spec.validation) * n + 1e-9)
    if min(b1, b2 - b1, n - b2) < min_length:
        raise SeriesTooShort(f"series of {n} samples cannot give {min_length} per split")
    return series.slice(0, b1), series.slice(b1, b2), series.slice(b2, n)


class WindowPair(NamedTuple):
    x: np.ndarray
    y: object
    source_index: int


@dataclass
class WindowSet:
    """Input windows ``x`` (n x L) with targets ``y`` (n,) or (n x T)."""

    x: np.ndarray
    y: np.ndarray
    source_index: np.ndarray
    interval_minutes: float = 1.0
    indices: np.ndarray = None  # positions in the parent set, for bags

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            y = self.y[i]
            return WindowPair(self.x[i], float(y) if y.ndim == 0 else y, int(self.source_index[i]))
        return WindowSet(self.x[i], self.y[i], self.source_index[i], self.interval_minutes)

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _steps(minutes, interval):
    steps = minutes / interval
    r = round(steps)
    if r < 1 or abs(steps - r) > 1e-9:
        raise ValueError(f"{minutes} min is not a positive multiple of {interval} min")
    return int(r)


minutes_to_steps = _steps


def window_starts(n, total, stride):
    if total > n:
        raise HorizonTooLong(f"window of {total} samples exceeds series of {n}")
    return np.arange(0, n - total + 1, stride)


def slice_windows(series: TimeSeries, input_minutes, target_minutes, stride=1,
                  mode="scalar") -> WindowSet:
    """Slice into (input, target) pairs; scalar targets sum the horizon."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    L = _steps(input_minutes, series.interval_minutes)
    T = _steps(target_minutes, series.interval_minutes)
    v = series.values
    starts = window_starts(v.size, L + T, stride)
    idx = starts[:, None] + np.arange(L + T)
    block = v[idx]
    x, y = block[:, :L], block[:, L:]
    if mode == "scalar":
        y = y.sum(axis=1)
    elif mode != "per-step":
        raise ValueError("mode must be 'scalar' or 'per-step'")
    return WindowSet(x, y, series.origin_index + starts, series.interval_minutes)


def aggregate_resolution(series, r: int):
    """Sum consecutive non-overlapping groups of ``r`` samples (partial tail dropped)."""
    if r < 1:
        raise ValueError("resolution factor must be >= 1")
    if isinstance(series, TimeSeries):
        v = aggregate_array(series.values, r)
        return TimeSeries(v, series.interval_minutes * r, series.origin_index)
    return aggregate_array(np.asarray(series, dtype=np.float64), r)


def aggregate_array(a, r):
    """Sum-aggregate along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    m = a.shape[-1] // r
    return a[..., :m * r].reshape(a.shape[:-1] + (m, r)).sum(axis=-1)


def bootstrap_bags(pairs: WindowSet, fraction=0.9, n_bags=25, seed=0):
    """Draw ``n_bags`` resamples (with replacement) of ``round(fraction * N)`` pairs."""
    n = len(pairs)
    if n == 0:
        raise ValueError("cannot bag an empty window set")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    size = max(1, int(round(fraction * n)))
    bags = []
    for b in range(n_bags):
        idx = np.random.default_rng([int(seed), b]).integers(0, n, size=size)
        bag = pairs[idx]
        bag.indices = idx
        bags.append(bag)
    return bags


# --------------------------------------------------------------------------
# decompose-then-slice

@dataclass
class SequenceSet:
    values: np.ndarray
    stride: int
    source_index: np.ndarray

    def __len__(self):
        return self.values.shape[0]


def build_sequences(series: TimeSeries, input_steps, target_steps, stride=1) -> SequenceSet:
    starts = window_starts(len(series), input_steps + target_steps, stride)
    idx = starts[:, None] + np.arange(input_steps + target_steps)
    return SequenceSet(series.values[idx], stride, series.origin_index + starts)


@dataclass
class ComponentDataset:
    """Per-component windows ``x`` (M, n, I) / ``y`` (M, n, T) plus raw truths.

    Components are the first ``top_m`` IMFs, followed by the residue when
    ``residue_component`` was requested. ``remainder`` holds whatever the kept
    components leave out of each decomposed block (IMFs beyond ``top_m``, and
    the residue when it is not a component).
    """

    x: np.ndarray
    y: np.ndarray
    truth: np.ndarray
    source_index: np.ndarray
    labels: list
    remainder: np.ndarray
    leakage: str = "faithful"
    n_imfs: np.ndarray = None
    dropped: list = field(default_factory=list)

    @property
    def n_components(self):
        return self.x.shape[0]

    def __len__(self):
        return self.x.shape[1]


@dataclass
class DecomposeSettings:
    method: str = "EEMD"
    sift: SiftConfig = field(default_factory=SiftConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)


def window_seed(seed, source_index):
    return int(np.random.SeedSequence([int(seed), int(source_index)]).generate_state(1)[0])


def _decompose_one(args):
    values, source, settings = args
    noise = settings.noise
    noise = NoiseConfig(noise.trials, noise.epsilon, window_seed(noise.seed, source),
                        noise.schedule)
    try:
        d = decompose(values, settings.method, noise, settings.sift)
    except DecompositionError as exc:
        return None, repr(exc)
    return (d.imfs, d.residue), None


def _decompose_all(blocks, sources, settings, workers):
    jobs = [(b, s, settings) for b, s in zip(blocks, sources)]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_decompose_one, jobs, chunksize=16))
    return [_decompose_one(j) for j in jobs]


def decompose_dataset(seqs: SequenceSet, settings: DecomposeSettings, input_steps,
                      target_steps, top_m=5, leakage="faithful", workers=1,
                      residue_component=True) -> ComponentDataset:
    """Decompose each sequence and slice the first ``top_m`` IMFs into windows.

    In ``faithful`` mode the whole input+target sequence is decomposed and
    each component is cut at ``input_steps``. In ``strict`` mode only the
    input part is decomposed and every component is paired with the raw
    per-step target.
    """
    if leakage not in LEAKAGE_MODES:
        raise ValueError(f"leakage must be one of {LEAKAGE_MODES}")
    I, T = input_steps, target_steps
    if seqs.values.shape[1] != I + T:
        raise ValueError("sequence length must equal input_steps + target_steps")
    blocks = seqs.values if leakage == "faithful" else seqs.values[:, :I]
    results = _decompose_all(blocks, seqs.source_index, settings, workers)

    keep, dropped = [], []
    for i, (imfs, err) in enumerate(results):
        if imfs is None:
            dropped.append((int(seqs.source_index[i]), err))
        else:
            keep.append(i)
    if dropped:
        logger.warning("dropped %d window(s) after decomposition errors", len(dropped))

    n, width = len(keep), blocks.shape[1]
    n_comp = top_m + bool(residue_component)
    comps = np.zeros((n_comp, n, width))
    counts = np.zeros(n, dtype=int)
    for j, i in enumerate(keep):
        imfs, residue = results[i][0]
        counts[j] = imfs.shape[0]
        m = min(top_m, imfs.shape[0])
        comps[:m, j] = imfs[:m]
        if residue_component:
            comps[top_m, j] = residue
    raw = seqs.values[keep]
    truth = raw[:, I:].sum(axis=1)
    remainder = blocks[keep] - comps.sum(axis=0)
    if leakage == "faithful":
        x, y = comps[:, :, :I], comps[:, :, I:]
    else:
        x = comps
        y = np.broadcast_to(raw[:, I:], (n_comp, n, T)).copy()
    labels = [f"imf_{m + 1}" for m in range(top_m)] + (["residue"] if residue_component else [])
    return ComponentDataset(x, y, truth, seqs.source_index[keep], labels, remainder,
                            leakage, counts, dropped)
