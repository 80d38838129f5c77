"""Repeated seeded experiments: data generation, base learners, aggregation,
RMSE, timing, significance marking and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import wilcoxon

from .aggregation import (MetaDataset, Stacker, apply_stacker, fit_stacker, load_stacker,
                          save_stacker)
from .config import DECOMPOSITION_METHODS, ExperimentConfig, dump_config
from .data_pipeline import (DecomposeSettings, aggregate_array, bootstrap_bags, build_sequences,
                            chronological_split, decompose_dataset, ingest_csv,
                            minutes_to_steps, slice_windows)
from .errors import EmptyInput, InsufficientRuns, IoFailure, RunFailed, ShapeMismatch
from .learners import SearchSpace, load_model, predict, save_model, tune_and_fit
from .signal_core import TimeSeries
from .synthetic import generate_synthetic

logger = logging.getLogger(__name__)

ALPHA = 0.05
SIGNIFICANCE_NOTE = ("statistically best: lowest mean RMSE plus every method not significantly "
                     f"worse under a paired two-sided Wilcoxon signed-rank test, alpha={ALPHA}")
METRICS_COLUMNS = ("method", "aggregation", "repeat", "seed", "leakage", "input_minutes",
                   "target_minutes", "n_test", "rmse")
TIMING_COLUMNS = ("method", "repeat", "seed", "decompose_min", "train_min", "aggregate_min",
                  "total_min")


def rmse(predictions, truths):
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if p.size == 0 or t.size == 0:
        raise EmptyInput("rmse needs at least one prediction")
    if p.size != t.size:
        raise ShapeMismatch(f"{p.size} predictions vs {t.size} truths")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def derive_seed(seed, *tags):
    """Stable sub-seed from a run seed and string/int tags."""
    keys = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(keys).generate_state(1)[0])


# --------------------------------------------------------------------------
# test-split isolation

class SealedSeries:
    """Test segment that hands out values only against a stated purpose.

    ``inputs`` covers window construction (which, in faithful leakage mode,
    includes decomposing the full input+target block); ``targets`` is the
    final evaluation. Each access is appended to ``audit`` when given.
    """

    def __init__(self, series: TimeSeries, audit=None):
        self._series = series
        self._audit = audit

    @property
    def origin_index(self):
        return self._series.origin_index

    def __len__(self):
        return len(self._series)

    def open(self, purpose):
        if purpose not in ("inputs", "targets"):
            raise ValueError("purpose must be 'inputs' or 'targets'")
        if self._audit is not None:
            self._audit.append(("test", purpose))
        return self._series


def _phase(audit, name):
    if audit is not None:
        audit.append(("phase", name))


# --------------------------------------------------------------------------
# member data

@dataclass
class MemberSet:
    """Training data for one method's base learners, aligned by window."""

    method: str
    names: list
    train: list            # per member (X, Y)
    val_x: list            # per member validation inputs
    val_y: list            # per member validation targets (early stopping)
    test_x: list           # per member test inputs
    val_truth: np.ndarray  # scalar horizon sums, validation windows
    test_starts: np.ndarray
    per_step: bool
    decompose_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def load_series(config: ExperimentConfig, seed) -> TimeSeries:
    d = config.data
    if d.path:
        return ingest_csv(d.path, d.timestamp_col, d.flow_col, d.site_col, d.site, d.max_fill)
    return generate_synthetic(config.synthetic, seed if config.synthetic.seed is None else None)


def split_series(config, series, audit=None):
    train, val, test = chronological_split(series, config.split_spec())
    return train, val, SealedSeries(test, audit)


def _windows(config, series, stride):
    return slice_windows(series, config.input_minutes, config.target_minutes, stride)


def prepare_members(config: ExperimentConfig, method, train, val, sealed: SealedSeries,
                    seed) -> MemberSet:
    test = sealed.open("inputs")
    if method in DECOMPOSITION_METHODS:
        return _prepare_decomposition(config, method, train, val, test, seed)
    wtr = _windows(config, train, config.stride_train)
    wva = _windows(config, val, config.stride_eval)
    wte = _windows(config, test, config.stride_eval)
    starts = wte.source_index - test.origin_index
    if method == "single":
        r = config.single_resolution
        return MemberSet(method, [f"r{r}"], [(aggregate_array(wtr.x, r), wtr.y)],
                         [aggregate_array(wva.x, r)], [wva.y], [aggregate_array(wte.x, r)],
                         wva.y, starts, False)
    if method == "bagging":
        bags = bootstrap_bags(wtr, config.bagging.fraction, config.bagging.members,
                              derive_seed(seed, "bags"))
        m = len(bags)
        return MemberSet(method, [f"bag{b}" for b in range(m)], [(b.x, b.y) for b in bags],
                         [wva.x] * m, [wva.y] * m, [wte.x] * m, wva.y, starts, False)
    if method == "multi_resolution":
        rs = [int(r) for r in config.resolutions]
        return MemberSet(method, [f"r{r}" for r in rs],
                         [(aggregate_array(wtr.x, r), wtr.y) for r in rs],
                         [aggregate_array(wva.x, r) for r in rs], [wva.y] * len(rs),
                         [aggregate_array(wte.x, r) for r in rs], wva.y, starts, False)
    raise ValueError(f"unknown method {method!r}")


def _prepare_decomposition(config, method, train, val, test, seed):
    I = minutes_to_steps(config.input_minutes, train.interval_minutes)
    T = minutes_to_steps(config.target_minutes, train.interval_minutes)
    dc = config.decomposition
    settings = DecomposeSettings(method.upper(), dc.sift(), dc.noise(derive_seed(seed, "noise")))
    t0 = time.perf_counter()
    sets = []
    for part, stride in ((train, config.stride_train), (val, config.stride_eval),
                         (test, config.stride_eval)):
        seqs = build_sequences(part, I, T, stride)
        sets.append(decompose_dataset(seqs, settings, I, T, dc.top_m, config.leakage,
                                      config.workers, dc.residue_component))
    elapsed = time.perf_counter() - t0
    tr, va, te = sets
    members = range(tr.n_components)
    diag = {"components": tr.labels,
            "dropped_windows": [len(s.dropped) for s in sets],
            "imf_count_range": [int(min(s.n_imfs.min(initial=99) for s in sets)),
                                int(max(s.n_imfs.max(initial=0) for s in sets))],
            "meta_layout": "component-major then step"}
    # the test set's own truth and target slices are discarded; truths are
    # read from the sealed segment only at evaluation time
    return MemberSet(method, list(tr.labels), [(tr.x[k], tr.y[k]) for k in members],
                     [va.x[k] for k in members], [va.y[k] for k in members],
                     [te.x[k] for k in members], va.truth,
                     te.source_index - test.origin_index, True, elapsed, diag)


def test_truth(config, sealed: SealedSeries, starts):
    """Scalar horizon sums for the test windows starting at ``starts``."""
    test = sealed.open("targets")
    I = minutes_to_steps(config.input_minutes, test.interval_minutes)
    T = minutes_to_steps(config.target_minutes, test.interval_minutes)
    idx = np.asarray(starts)[:, None] + I + np.arange(T)
    return test.values[idx].sum(axis=1)


# --------------------------------------------------------------------------
# training and aggregation

def _train_member(args):
    config, train, val, seed = args
    space = SearchSpace(base=replace(config.learner, seed=seed))
    return tune_and_fit(space, config.tuning_budget, train, val, seed)[1]


def train_members(config: ExperimentConfig, members: MemberSet, seed):
    jobs = [(config, members.train[k], (members.val_x[k], members.val_y[k]),
             derive_seed(seed, members.method, "member", k))
            for k in range(len(members.names))]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            return list(pool.map(_train_member, jobs))
    return [_train_member(j) for j in jobs]


def member_predictions(models, xs):
    """Stack member forecasts: (M, n) for scalar members, (M, n, T) per-step."""
    return np.stack([predict(m, x) for m, x in zip(models, xs)])


def meta_features(preds):
    """(M, n[, T]) member forecasts -> (n, M*T) rows, member-major then step."""
    p = np.asarray(preds, dtype=np.float64)
    if p.ndim == 2:
        p = p[:, :, None]
    m, n, t = p.shape
    return p.transpose(1, 0, 2).reshape(n, m * t)


def fit_aggregator(config: ExperimentConfig, aggregation, members: MemberSet, val_preds,
                   seed) -> Stacker:
    width = meta_features(val_preds).shape[1]
    if aggregation == "none":
        return Stacker("mean", width)
    if aggregation in ("mean", "sum"):
        return Stacker(aggregation, width)
    names = members.names
    meta = MetaDataset.from_members(val_preds, members.val_truth, names)
    if aggregation == "linear":
        return fit_stacker("linear", meta)
    # neural: earliest 80% of validation rows fit, the latest 20% early-stop
    cut = max(1, int(math.floor(0.8 * len(meta))))
    fit_part = MetaDataset(meta.features[:cut], meta.targets[:cut], meta.columns)
    stop_part = (MetaDataset(meta.features[cut:], meta.targets[cut:], meta.columns)
                 if cut < len(meta) else None)
    sc = config.stacker
    return fit_stacker("neural", fit_part, stop_part, derive_seed(seed, "stacker"),
                       sc.budget, sc.max_epochs, sc.patience)


# --------------------------------------------------------------------------
# records

@dataclass
class RunRecord:
    method: str
    aggregation: str
    repeat: int
    seed: int
    rmse: float
    n_test: int

    @property
    def label(self):
        return f"{self.method}+{self.aggregation}"


@dataclass
class TimingRecord:
    method: str
    repeat: int
    seed: int
    decompose_min: float
    train_min: float
    aggregate_min: float
    total_min: float


@dataclass
class MetricsReport:
    config_hash: str = ""
    leakage: str = "faithful"
    profile: str = "quick"
    input_minutes: float = 120.0
    target_minutes: float = 10.0
    seeds: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    significance: dict | None = None
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def rmse_by_label(self):
        out = {label: [] for label in self.labels}
        for r in sorted(self.runs, key=lambda r: r.repeat):
            out.setdefault(r.label, []).append(r.rmse)
        return out

    def mean_rmse(self):
        return {k: float(np.mean(v)) for k, v in self.rmse_by_label().items() if v}

    def to_dict(self):
        d = asdict(self)
        d["mean_rmse"] = self.mean_rmse()
        d["significance_test"] = SIGNIFICANCE_NOTE
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k not in ("mean_rmse", "significance_test")}
        d["runs"] = [RunRecord(**r) for r in d.get("runs", [])]
        d["timings"] = [TimingRecord(**t) for t in d.get("timings", [])]
        return cls(**d)


def new_report(config: ExperimentConfig) -> MetricsReport:
    return MetricsReport(config.hash(), config.leakage, config.profile, config.input_minutes,
                         config.target_minutes, config.run_seeds(),
                         [p.label for p in config.pipelines], config=config.to_dict())


# --------------------------------------------------------------------------
# running

def run_method(config: ExperimentConfig, method, train, val, sealed, seed, repeat=0,
               audit=None, checkpoint_dir=None):
    """One method for one repeat; returns (run records, timing record)."""
    t_start = time.perf_counter()
    _phase(audit, f"prepare:{method}")
    members = prepare_members(config, method, train, val, sealed, seed)

    _phase(audit, f"train:{method}")
    t0 = time.perf_counter()
    models = train_members(config, members, seed)
    val_preds = member_predictions(models, members.val_x)
    test_preds = member_predictions(models, members.test_x)
    train_s = time.perf_counter() - t0

    _phase(audit, f"aggregate:{method}")
    t0 = time.perf_counter()
    aggregations = config.aggregations_for(method)
    stackers = {a: fit_aggregator(config, a, members, val_preds, seed) for a in aggregations}
    test_meta = meta_features(test_preds)
    forecasts = {a: apply_stacker(s, test_meta) for a, s in stackers.items()}
    agg_s = time.perf_counter() - t0

    if checkpoint_dir is not None:
        save_checkpoints(checkpoint_dir, repeat, method, models, stackers)

    _phase(audit, f"evaluate:{method}")
    truth = test_truth(config, sealed, members.test_starts)
    runs = [RunRecord(method, a, repeat, int(seed), rmse(forecasts[a], truth), int(truth.size))
            for a in aggregations]
    total_s = time.perf_counter() - t_start
    timing = TimingRecord(method, repeat, int(seed), members.decompose_seconds / 60,
                          train_s / 60, agg_s / 60, total_s / 60)
    return runs, timing, members.diagnostics


def run_experiment(config: ExperimentConfig, out_dir=None, save_models=False,
                   audit=None) -> MetricsReport:
    """Every pipeline for every repeat seed; optionally persists artifacts.

    Methods shared by several pipelines train their base learners once and
    apply each requested aggregation to the same member forecasts.
    """
    report = new_report(config)
    out = Path(out_dir) if out_dir is not None else None
    ckpt = out / "checkpoints" if (out is not None and save_models) else None
    for repeat, seed in enumerate(config.run_seeds()):
        try:
            series = load_series(config, seed)
            train, val, sealed = split_series(config, series, audit)
            for method in config.methods:
                runs, timing, diag = run_method(config, method, train, val, sealed, seed,
                                                repeat, audit, ckpt)
                report.runs.extend(runs)
                report.timings.append(timing)
                if diag:
                    report.diagnostics.setdefault(method, diag)
        except Exception as exc:
            if out is not None:
                write_outputs(report, out, config)
            raise RunFailed(f"repeat {repeat} (seed {seed}) failed: {exc!r}", report) from exc
    report.significance = _significance_or_none(report)
    if out is not None:
        write_outputs(report, out, config)
    return report


def _significance_or_none(report):
    try:
        return mark_significant(report.rmse_by_label())
    except InsufficientRuns as exc:
        report.diagnostics["significance"] = str(exc)
        return None


def save_checkpoints(root, repeat, method, models, stackers):
    d = Path(root) / f"repeat_{repeat}" / method
    d.mkdir(parents=True, exist_ok=True)
    for k, m in enumerate(models):
        save_model(m, d / f"member_{k}.npz")
    for agg, s in stackers.items():
        save_stacker(s, d / f"stacker_{agg}.npz")


def evaluate_checkpoints(config: ExperimentConfig, checkpoint_dir, audit=None) -> MetricsReport:
    """Rebuild test inputs deterministically and score saved models/stackers."""
    report = new_report(config)
    root = Path(checkpoint_dir)
    for repeat, seed in enumerate(config.run_seeds()):
        series = load_series(config, seed)
        train, val, sealed = split_series(config, series, audit)
        for method in config.methods:
            d = root / f"repeat_{repeat}" / method
            if not d.is_dir():
                raise IoFailure(f"no checkpoints for {method} repeat {repeat} under {root}")
            members = prepare_members(config, method, train, val, sealed, seed)
            models = [load_model(d / f"member_{k}.npz") for k in range(len(members.names))]
            test_meta = meta_features(member_predictions(models, members.test_x))
            truth = test_truth(config, sealed, members.test_starts)
            for agg in config.aggregations_for(method):
                stacker = load_stacker(d / f"stacker_{agg}.npz")
                report.runs.append(RunRecord(method, agg, repeat, int(seed),
                                             rmse(apply_stacker(stacker, test_meta), truth),
                                             int(truth.size)))
    report.significance = _significance_or_none(report)
    return report


# --------------------------------------------------------------------------
# significance

def mark_significant(rmse_by_method, alpha=ALPHA):
    """Flag the lowest-mean method and all methods not significantly worse.

    Uses a paired two-sided Wilcoxon signed-rank test on per-run RMSEs.
    """
    runs = {k: np.asarray(v, dtype=np.float64) for k, v in rmse_by_method.items()}
    if not runs:
        return {}
    counts = {v.size for v in runs.values()}
    if len(counts) > 1:
        raise ShapeMismatch("methods have different repeat counts")
    n = counts.pop()
    if n < 5:
        raise InsufficientRuns(f"significance marking needs >= 5 repeats, got {n}")
    if len(runs) == 1:
        return {k: True for k in runs}
    means = {k: float(v.mean()) for k, v in runs.items()}
    best = min(runs, key=lambda k: means[k])
    flags = {}
    for k, v in runs.items():
        if k == best or np.array_equal(v, runs[best]):
            flags[k] = True
            continue
        p = float(wilcoxon(v, runs[best], alternative="two-sided").pvalue)
        flags[k] = not p < alpha
    return flags


# --------------------------------------------------------------------------
# reports

def _fmt(x):
    return repr(float(x))


def _render_csv(report: MetricsReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in sorted(report.runs, key=lambda r: (report.labels.index(r.label)
                                                if r.label in report.labels else 1 << 30,
                                                r.repeat)):
        w.writerow([r.method, r.aggregation, r.repeat, r.seed, report.leakage,
                    _fmt(report.input_minutes), _fmt(report.target_minutes), r.n_test,
                    _fmt(r.rmse)])
    return buf.getvalue()


def _render_text(report: MetricsReport):
    lines = [f"# leakage={report.leakage} profile={report.profile} "
             f"input={report.input_minutes:g}min target={report.target_minutes:g}min "
             f"config={report.config_hash[:12]}",
             f"{'method':<28} {'runs':>4} {'mean_rmse':>12} {'std_rmse':>12}  best"]
    by_label = {k: v for k, v in report.rmse_by_label().items() if v}
    if not by_label:
        return "\n".join(lines) + "\n"
    sig = report.significance or {}
    for label, vals in by_label.items():
        flag = sig.get(label)
        name = f"**{label}**" if flag else label
        lines.append(f"{name:<28} {len(vals):>4} {np.mean(vals):>12.4f} "
                     f"{np.std(vals, ddof=1) if len(vals) > 1 else 0.0:>12.4f}  "
                     f"{'*' if flag else ''}")
    if report.significance is None:
        lines.append("significance not computed: "
                     + report.diagnostics.get("significance", "no runs"))
    lines.append(f"** / *: {SIGNIFICANCE_NOTE}")
    return "\n".join(lines) + "\n"


def _render_json(report: MetricsReport):
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def render_report(report: MetricsReport, fmt="text"):
    if fmt == "text":
        return _render_text(report)
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "json":
        return _render_json(report)
    raise ValueError("format must be 'text', 'csv' or 'json'")


def emit_report(report: MetricsReport, fmt="text", path=None):
    """Render deterministically and optionally write to ``path``."""
    text = render_report(report, fmt)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise IoFailure(f"cannot write report to {path}: {exc}") from exc
    return text


def parse_metrics_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    ints = ("repeat", "seed", "n_test")
    floats = ("input_minutes", "target_minutes", "rmse")
    for r in rows:
        for k in ints:
            r[k] = int(r[k])
        for k in floats:
            r[k] = float(r[k])
    return rows


def render_timings_csv(report: MetricsReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for t in report.timings:
        w.writerow([t.method, t.repeat, t.seed, _fmt(t.decompose_min), _fmt(t.train_min),
                    _fmt(t.aggregate_min), _fmt(t.total_min)])
    return buf.getvalue()


def load_report(path) -> MetricsReport:
    try:
        return MetricsReport.from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise IoFailure(f"cannot read report {path}: {exc}") from exc


def write_outputs(report: MetricsReport, out_dir, config: ExperimentConfig | None = None):
    """metrics.csv (no timings, so reruns are byte-identical), report.txt,
    report.json, timings.csv and the resolved config."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    emit_report(report, "csv", out / "metrics.csv")
    emit_report(report, "text", out / "report.txt")
    emit_report(report, "json", out / "report.json")
    (out / "timings.csv").write_text(render_timings_csv(report))
    if config is not None:
        dump_config(config, out / "config.yaml")
    return out


# --------------------------------------------------------------------------
# timing

def timing_profile(config: ExperimentConfig, runs=3, methods=None):
    """Median per-stage wall-clock minutes for each method over ``runs`` runs.

    Each run uses the first configured seed; methods are interleaved within
    a run so slow drift in machine load hits them evenly.
    """
    methods = list(methods or config.methods)
    seed = config.run_seeds()[0]
    samples = {m: [] for m in methods}
    for _ in range(runs):
        series = load_series(config, seed)
        train, val, sealed = split_series(config, series)
        for m in methods:
            _, timing, _ = run_method(config, m, train, val, sealed, seed)
            samples[m].append(timing)
    keys = ("decompose_min", "train_min", "aggregate_min", "total_min")
    return {m: {k: float(np.median([getattr(t, k) for t in ts])) for k in keys}
            for m, ts in samples.items()}
