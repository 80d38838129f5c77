"""Combining base-learner outputs: mean/sum baselines and stacked final learners."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, SingularDesign
from .learners import (ForecastModel, LearnerSpec, SearchSpace, model_arrays, model_from_arrays,
                       predict, tune_and_fit)

logger = logging.getLogger(__name__)

STACKER_KINDS = ("mean", "sum", "linear", "neural")
STACKER_WIDTHS = (8, 16, 32, 64)
STACKER_DROPOUTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
STACKER_FORMAT = "decompens-stacker"


def aggregate_baseline(predictions, kind="mean"):
    """Elementwise mean or sum over the member axis (axis 0)."""
    try:
        stacked = np.asarray(predictions, dtype=np.float64)
    except ValueError as exc:
        raise ShapeMismatch("member predictions have different shapes") from exc
    if stacked.ndim == 0 or stacked.shape[0] == 0 or stacked.dtype == object:
        raise ShapeMismatch("need at least one member prediction of a common shape")
    if kind == "mean":
        return stacked.mean(axis=0)
    if kind == "sum":
        return stacked.sum(axis=0)
    raise ValueError("baseline kind must be 'mean' or 'sum'")


def sum_components(component_preds):
    """Per-step component forecasts (M, n, T) -> scalar horizon totals (n,)."""
    total = aggregate_baseline(component_preds, "sum")
    return total.sum(axis=-1) if total.ndim > 1 else total


@dataclass
class MetaDataset:
    """Rows are windows; columns are base-learner outputs in a fixed layout."""

    features: np.ndarray
    targets: np.ndarray
    columns: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.features.ndim != 2 or self.features.shape[0] != self.targets.size:
            raise ShapeMismatch("meta features must be (rows, columns) with one target per row")
        if not self.columns:
            self.columns = [f"f{i}" for i in range(self.features.shape[1])]

    def __len__(self):
        return self.targets.size

    @classmethod
    def from_members(cls, member_preds, targets, names=None):
        """Build meta rows from member outputs shaped (M, n) or (M, n, T).

        Columns run member-major then step.
        """
        p = np.asarray(member_preds, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        m, n, t = p.shape
        names = names or [f"m{i}" for i in range(m)]
        cols = [f"{names[i]}" if t == 1 else f"{names[i]}[{j}]" for i in range(m) for j in range(t)]
        return cls(p.transpose(1, 0, 2).reshape(n, m * t), targets, cols)


@dataclass
class Stacker:
    kind: str
    n_inputs: int
    weights: np.ndarray = None
    bias: float = 0.0
    model: ForecastModel = None
    columns: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STACKER_KINDS:
            raise ValueError(f"stacker kind must be one of {STACKER_KINDS}")


def baseline_stacker(kind, n_inputs):
    return Stacker(kind, n_inputs)


def _fit_linear(meta: MetaDataset, ridge=1e-8, strict=False):
    X, y = meta.features, meta.targets
    n, p = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    rank = np.linalg.matrix_rank(A)
    singular = rank < p + 1
    if singular and strict:
        raise SingularDesign(f"meta design has rank {rank} < {p + 1}")
    if singular:
        # minimum-norm least squares
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        logger.info("stacker design is rank deficient (%d < %d); using minimum-norm fit",
                       rank, p + 1)
    else:
        Aaug = np.vstack([A, np.sqrt(ridge) * np.eye(p, p + 1)])
        coef, *_ = np.linalg.lstsq(Aaug, np.concatenate([y, np.zeros(p)]), rcond=None)
    return Stacker("linear", p, coef[:p], float(coef[p]), columns=list(meta.columns),
                   diagnostics={"singular_design": bool(singular), "rank": int(rank)})


def neural_search_space(seed=0, max_epochs=100, patience=10):
    base = LearnerSpec(kind="feedforward", hidden=(32, 32), dropouts=(0.0, 0.0), bottleneck=None,
                       max_epochs=max_epochs, patience=min(patience, max_epochs - 1), seed=seed)
    return SearchSpace(base, hidden=STACKER_WIDTHS, dropouts=STACKER_DROPOUTS)


def fit_stacker(kind, meta: MetaDataset, val_meta: MetaDataset | None = None, seed=0,
                budget=1, max_epochs=100, patience=10, strict=False) -> Stacker:
    """Fit a final learner on meta data.

    ``linear`` is least squares with a 1e-8 ridge (minimum-norm fallback
    and a ``singular_design`` flag when the design is rank deficient;
    ``strict=True`` raises SingularDesign instead).
    ``neural`` is an MLP of three dense layers with two dropouts, tuned by
    random search; ``val_meta`` drives its early stopping.
    """
    if kind in ("mean", "sum"):
        return baseline_stacker(kind, meta.features.shape[1])
    if kind == "linear":
        return _fit_linear(meta, strict=strict)
    if kind != "neural":
        raise ValueError(f"unknown stacker kind {kind!r}")
    space = neural_search_space(seed, max_epochs, patience)
    val = None if val_meta is None else (val_meta.features, val_meta.targets)
    spec, model = tune_and_fit(space, budget, (meta.features, meta.targets), val, seed)
    return Stacker("neural", meta.features.shape[1], model=model, columns=list(meta.columns),
                   diagnostics={"spec": spec.to_dict()})


def apply_stacker(stacker: Stacker, rows):
    """Final prediction for one meta row (scalar) or a matrix of rows."""
    X = np.asarray(rows, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != stacker.n_inputs:
        raise ShapeMismatch(f"expected meta rows of width {stacker.n_inputs}, got {X.shape}")
    if stacker.kind == "mean":
        out = X.mean(axis=1)
    elif stacker.kind == "sum":
        out = X.sum(axis=1)
    elif stacker.kind == "linear":
        # elementwise then sum, so unit weights reproduce the sum stacker bit for bit
        out = (X * stacker.weights).sum(axis=1) + stacker.bias
    else:
        out = predict(stacker.model, X)
    return float(out[0]) if single else out


def save_stacker(stacker: Stacker, path):
    header = {"format": STACKER_FORMAT, "version": 1, "kind": stacker.kind,
              "n_inputs": stacker.n_inputs, "bias": stacker.bias,
              "columns": stacker.columns, "diagnostics": stacker.diagnostics}
    arrays = {"stacker_header": np.array(json.dumps(header))}
    if stacker.weights is not None:
        arrays["weights"] = stacker.weights
    if stacker.model is not None:
        arrays.update(model_arrays(stacker.model, prefix="model/"))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_stacker(path) -> Stacker:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["stacker_header"]))
        if header.get("format") != STACKER_FORMAT:
            raise ValueError("not a stacker checkpoint")
        weights = np.array(data["weights"]) if "weights" in data.files else None
        model = model_from_arrays(data, prefix="model/") if "model/header" in data.files else None
    return Stacker(header["kind"], header["n_inputs"], weights, header["bias"], model,
                   header["columns"], header["diagnostics"])
