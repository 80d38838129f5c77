"""Experiment configuration: profiles, validation, file I/O and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .data_pipeline import LEAKAGE_MODES, SplitSpec
from .errors import ConfigError
from .learners import LearnerSpec
from .noise_ensembles import NoiseConfig
from .signal_core import SiftConfig
from .synthetic import SyntheticSpec

SCHEMA_VERSION = 1
METHODS = ("single", "bagging", "multi_resolution", "emd", "eemd", "ceemdan")
DECOMPOSITION_METHODS = ("emd", "eemd", "ceemdan")
AGGREGATIONS = ("none", "mean", "sum", "linear", "neural")
PROFILES = ("quick", "paper")

# fields that change where results go or how fast they arrive, never their values
_UNHASHED = ("output_dir", "workers")


def valid_aggregations(method):
    """Aggregations allowed for a method.

    Mean is the baseline for bagging and multi-resolution, sum the baseline
    for decomposition; the linear and neural final learners fit any method.
    ``none`` passes a single learner's forecast through unchanged.
    """
    if method == "single":
        return ("none", "linear", "neural")
    if method in DECOMPOSITION_METHODS:
        return ("sum", "linear", "neural")
    return ("mean", "linear", "neural")


@dataclass
class DataSection:
    path: str | None = None
    timestamp_col: str = "timestamp"
    flow_col: str = "flow"
    site_col: str | None = None
    site: str | None = None
    max_fill: int = 1


@dataclass
class DecompositionSection:
    top_m: int = 5
    residue_component: bool = True
    trials: int = 10
    epsilon: float = 0.2
    schedule: list = field(default_factory=list)
    spline_kind: str = "akima"
    max_sift_iterations: int = 50
    mean_tolerance: float = 0.05
    max_imfs: int = 12
    residue_extrema: int = 1

    def sift(self):
        return SiftConfig(self.spline_kind, self.max_sift_iterations, self.mean_tolerance,
                          self.max_imfs, self.residue_extrema)

    def noise(self, seed):
        return NoiseConfig(self.trials, self.epsilon, seed, tuple(self.schedule))


@dataclass
class BaggingSection:
    members: int = 25
    fraction: float = 0.9


@dataclass
class StackerSection:
    budget: int = 1
    max_epochs: int = 100
    patience: int = 10


@dataclass
class Pipeline:
    method: str
    aggregation: str

    @property
    def label(self):
        return f"{self.method}+{self.aggregation}"


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    profile: str = "quick"
    data: DataSection = field(default_factory=DataSection)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    pipelines: list = field(default_factory=lambda: [Pipeline("single", "none"),
                                                     Pipeline("eemd", "sum"),
                                                     Pipeline("eemd", "linear")])
    input_minutes: float = 120.0
    target_minutes: float = 10.0
    repeats: int = 10
    seed: int = 0
    seeds: list | None = None
    leakage: str = "faithful"
    split: list = field(default_factory=lambda: [0.7, 0.1, 0.2])
    stride_train: int = 20
    stride_eval: int = 5
    bagging: BaggingSection = field(default_factory=BaggingSection)
    resolutions: list = field(default_factory=lambda: [1, 2, 5, 10])
    single_resolution: int = 1
    decomposition: DecompositionSection = field(default_factory=DecompositionSection)
    learner: LearnerSpec = field(default_factory=lambda: LearnerSpec(kind="feedforward"))
    tuning_budget: int = 1
    stacker: StackerSection = field(default_factory=StackerSection)
    workers: int = 1
    output_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    @property
    def methods(self):
        """Distinct methods in pipeline order."""
        return list(dict.fromkeys(p.method for p in self.pipelines))

    def aggregations_for(self, method):
        return [p.aggregation for p in self.pipelines if p.method == method]

    def run_seeds(self):
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.seed + r for r in range(self.repeats)]

    def split_spec(self):
        return SplitSpec(*self.split)

    # ------------------------------------------------------------------
    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {self.schema_version}; "
                              f"expected {SCHEMA_VERSION}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if not self.pipelines:
            raise ConfigError("at least one method/aggregation pipeline is required")
        for p in self.pipelines:
            if p.method not in METHODS:
                raise ConfigError(f"unknown method {p.method!r}; choose from {METHODS}")
            if p.aggregation not in AGGREGATIONS:
                raise ConfigError(f"unknown aggregation {p.aggregation!r}")
            allowed = valid_aggregations(p.method)
            if p.aggregation not in allowed:
                raise ConfigError(
                    f"{p.label} is not a valid pairing: sum aggregation is the baseline for "
                    "decomposition methods only, mean aggregation for bagging and "
                    "multi-resolution only, linear/neural final learners apply to every "
                    f"method; allowed for {p.method}: {allowed}")
            if self.leakage == "strict" and p.aggregation == "sum":
                raise ConfigError(f"{p.label}: in strict leakage mode every component predicts "
                                  "the raw target, so summing components is meaningless")
        if len({p.label for p in self.pipelines}) != len(self.pipelines):
            raise ConfigError("duplicate pipelines")
        if self.leakage not in LEAKAGE_MODES:
            raise ConfigError(f"leakage must be one of {LEAKAGE_MODES}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.seeds is not None and len(self.seeds) != self.repeats:
            raise ConfigError("seeds must list exactly `repeats` entries")
        if self.input_minutes <= 0 or self.target_minutes <= 0:
            raise ConfigError("input and target horizons must be positive")
        if self.stride_train < 1 or self.stride_eval < 1:
            raise ConfigError("strides must be >= 1")
        if self.tuning_budget < 1 or self.stacker.budget < 1:
            raise ConfigError("tuning budgets must be >= 1")
        if not self.resolutions or any(int(r) < 1 for r in self.resolutions):
            raise ConfigError("resolutions must be positive integers")
        if self.single_resolution < 1:
            raise ConfigError("single_resolution must be >= 1")
        if self.decomposition.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        if self.bagging.members < 1 or not 0 < self.bagging.fraction <= 1:
            raise ConfigError("bagging needs members >= 1 and 0 < fraction <= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.split_spec()
            self.decomposition.sift()
            self.decomposition.noise(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # ------------------------------------------------------------------
    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "pipelines":
                v = [{"method": p.method, "aggregation": p.aggregation} for p in v]
            elif f.name == "learner":
                v = v.to_dict()
            elif f.name == "synthetic":
                v = v.to_dict()
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            d[f.name] = copy.deepcopy(v)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        version = d.get("schema_version", None)
        if version is None:
            raise ConfigError("config must declare schema_version")
        profile = d.get("profile", "quick")
        base = profile_config(profile) if profile in PROFILES else cls(profile="quick")
        kw = {}
        sections = {"data": DataSection, "decomposition": DecompositionSection,
                    "bagging": BaggingSection, "stacker": StackerSection}
        try:
            for key, value in d.items():
                if key in sections:
                    kw[key] = _merge(getattr(base, key), value)
                elif key == "synthetic":
                    kw[key] = _merge(base.synthetic, value)
                elif key == "learner":
                    kw[key] = LearnerSpec.from_dict({**base.learner.to_dict(), **(value or {})})
                elif key == "pipelines":
                    kw[key] = [_pipeline(p) for p in value]
                else:
                    kw[key] = value
            return replace(base, **kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def hash(self):
        """sha256 of the canonical JSON of every result-affecting field."""
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _merge(obj, overrides):
    if not overrides:
        return obj
    valid = {f.name for f in fields(obj)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown keys for {type(obj).__name__}: {sorted(unknown)}")
    return replace(obj, **overrides)


def _pipeline(p):
    if isinstance(p, Pipeline):
        return p
    if isinstance(p, str):
        method, _, agg = p.partition("+")
        return Pipeline(method, agg or "none")
    return Pipeline(p["method"], p["aggregation"])


def profile_config(profile="quick", **overrides) -> ExperimentConfig:
    """Desk-scale ``quick`` defaults or the full ``paper`` protocol."""
    if profile == "quick":
        cfg = ExperimentConfig(profile="quick")
    elif profile == "paper":
        cfg = ExperimentConfig(
            profile="paper",
            stride_train=1, stride_eval=1,
            decomposition=DecompositionSection(trials=25, residue_component=False),
            learner=LearnerSpec(kind="recurrent"),
            tuning_budget=10, stacker=StackerSection(budget=10),
        )
    else:
        raise ConfigError(f"profile must be one of {PROFILES}")
    return replace(cfg, **overrides) if overrides else cfg


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON config file (JSON is a subset of YAML)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(config: ExperimentConfig, path):
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    Path(path).write_text(text)
    return path
