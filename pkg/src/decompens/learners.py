"""Base forecasters: closed-form linear, feed-forward and LSTM networks.

The networks are plain numpy with hand-written backward passes. Layout of
the neural learners::

    [LSTM(units) -> last hidden state]          (recurrent kind only)
    Dense(hidden[0]) -> Dropout(dropouts[0])
    Dense(hidden[1]) -> Dropout(dropouts[1])
    Dense(bottleneck)                           (skipped when None)
    Dense(output)
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DivergedTraining, ShapeMismatch

KINDS = ("linear", "feedforward", "recurrent")
WIDTH_CHOICES = (8, 16, 32, 64, 128)
DROPOUT_CHOICES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "recurrent"
    recurrent_units: int = 32
    hidden: tuple = (32, 32)
    dropouts: tuple = (0.0, 0.0)
    bottleneck: int | None = 10
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    ridge: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "dropouts", tuple(float(d) for d in self.dropouts))
        if len(self.dropouts) != len(self.hidden):
            raise ValueError("need one dropout rate per hidden layer")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["dropouts"] = list(self.dropouts)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "hidden": tuple(d.get("hidden", ())),
                      "dropouts": tuple(d.get("dropouts", ()))})


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# --------------------------------------------------------------------------
# network definition

def layer_sizes(spec: LearnerSpec, n_in, n_out):
    """(fan_in, fan_out) for every dense layer, in order."""
    widths = list(spec.hidden)
    if spec.bottleneck:
        widths.append(spec.bottleneck)
    widths.append(n_out)
    first = spec.recurrent_units if spec.kind == "recurrent" else n_in
    fans = [first] + widths
    return list(zip(fans[:-1], fans[1:]))


def init_params(spec: LearnerSpec, n_in, n_out, rng):
    params = {}

    def glorot(a, b):
        lim = np.sqrt(6.0 / (a + b))
        return rng.uniform(-lim, lim, size=(a, b))

    if spec.kind == "recurrent":
        h = spec.recurrent_units
        params["lstm_Wx"] = glorot(1, 4 * h)
        params["lstm_Wh"] = glorot(h, 4 * h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget-gate bias
        params["lstm_b"] = b
    for i, (a, b) in enumerate(layer_sizes(spec, n_in, n_out)):
        params[f"d{i}_W"] = glorot(a, b)
        params[f"d{i}_b"] = np.zeros(b)
    return params


def n_parameters(spec: LearnerSpec, n_in, n_out):
    if spec.kind == "linear":
        return (n_in + 1) * n_out
    total = sum((a + 1) * b for a, b in layer_sizes(spec, n_in, n_out))
    if spec.kind == "recurrent":
        h = spec.recurrent_units
        total += (1 + h + 1) * 4 * h
    return total


def lstm_forward(X, Wx, Wh, b):
    """Run an LSTM over scalar sequences ``X`` (B, L); gates ordered i, f, o, g."""
    B, L = X.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(L):
        z = X[:, t:t + 1] @ Wx + h @ Wh + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((i, f, o, g, c_prev, h_prev, tc))
    return h, steps


def lstm_backward(dh, X, Wx, Wh, steps):
    B, L = X.shape
    H = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dc = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in reversed(range(L)):
        i, f, o, g, c_prev, h_prev, tc = steps[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        dWx += X[:, t:t + 1].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dh = dz @ Wh.T
        dc = dc * f
    return dWx, dWh, db


def dropout_masks(spec: LearnerSpec, batch, rng):
    masks = []
    for width, p in zip(spec.hidden, spec.dropouts):
        if p > 0:
            masks.append((rng.random((batch, width)) >= p) / (1.0 - p))
        else:
            masks.append(None)
    return masks


def forward(spec: LearnerSpec, params, X, masks=None):
    """Network output for normalized inputs; ``masks`` enables dropout."""
    cache = {"X": X}
    if spec.kind == "recurrent":
        a, cache["lstm"] = lstm_forward(X, params["lstm_Wx"], params["lstm_Wh"], params["lstm_b"])
    else:
        a = X
    n_dense = sum(1 for k in params if k.endswith("_W"))
    acts = [a]
    for j in range(n_dense):
        z = a @ params[f"d{j}_W"] + params[f"d{j}_b"]
        if j == n_dense - 1:
            a = z
        else:
            a = np.maximum(z, 0.0)
            if masks is not None and j < len(masks) and masks[j] is not None:
                a = a * masks[j]
        acts.append(a)
    cache["acts"] = acts
    cache["masks"] = masks
    return a, cache


def backward(spec: LearnerSpec, params, cache, dout):
    grads = {}
    acts = cache["acts"]
    masks = cache["masks"]
    n_dense = len(acts) - 1
    d = dout
    for j in reversed(range(n_dense)):
        if j < n_dense - 1:
            if masks is not None and j < len(masks) and masks[j] is not None:
                d = d * masks[j]
            d = d * (acts[j + 1] > 0)
        grads[f"d{j}_W"] = acts[j].T @ d
        grads[f"d{j}_b"] = d.sum(axis=0)
        d = d @ params[f"d{j}_W"].T
    if spec.kind == "recurrent":
        dWx, dWh, db = lstm_backward(d, cache["X"], params["lstm_Wx"], params["lstm_Wh"],
                                     cache["lstm"])
        grads.update(lstm_Wx=dWx, lstm_Wh=dWh, lstm_b=db)
    return grads


def loss_and_grads(spec, params, X, Y, masks=None):
    """Mean squared error and its gradient with respect to every parameter."""
    out, cache = forward(spec, params, X, masks)
    diff = out - Y
    loss = float(np.mean(diff * diff))
    grads = backward(spec, params, cache, 2.0 * diff / diff.size)
    return loss, grads


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# --------------------------------------------------------------------------
# fitting

@dataclass
class ForecastModel:
    spec: LearnerSpec
    params: dict
    input_length: int
    output_length: int
    x_mean: float = 0.0
    x_std: float = 1.0
    y_mean: np.ndarray = None
    y_std: np.ndarray = None
    log: list = field(default_factory=list)
    best_epoch: int = 0
    scalar_output: bool = False

    @property
    def best_val_loss(self):
        if not self.log:
            return float("nan")
        return self.log[self.best_epoch]["val_loss"]


def _xy(pairs):
    if pairs is None:
        return None, None
    if hasattr(pairs, "x"):
        X, Y = pairs.x, pairs.y
    else:
        X, Y = pairs
    return np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)


def _as_2d(Y):
    return Y[:, None] if Y.ndim == 1 else Y


def fit(spec: LearnerSpec, train, val=None) -> ForecastModel:
    """Train a learner; neural kinds use Adam with early stopping on ``val``."""
    X, Y = _xy(train)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeMismatch("training inputs must be a non-empty (n, L) array")
    scalar = Y.ndim == 1
    Y = _as_2d(Y)
    Xv, Yv = _xy(val)
    if Xv is not None and len(Xv) == 0:
        Xv = None
    if Xv is not None:
        Yv = _as_2d(Yv)
        if Xv.shape[1] != X.shape[1] or Yv.shape[1] != Y.shape[1]:
            raise ShapeMismatch("validation shapes differ from training shapes")
    if spec.kind == "linear":
        return _fit_linear(spec, X, Y, Xv, Yv, scalar)
    return _fit_network(spec, X, Y, Xv, Yv, scalar)


def _fit_linear(spec, X, Y, Xv, Yv, scalar):
    n, L = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    if spec.ridge > 0:
        reg = np.sqrt(spec.ridge) * np.eye(L, L + 1)
        A = np.vstack([A, reg])
        Yaug = np.vstack([Y, np.zeros((L, Y.shape[1]))])
    else:
        Yaug = Y
    coef, *_ = np.linalg.lstsq(A, Yaug, rcond=None)
    params = {"d0_W": coef[:L], "d0_b": coef[L]}
    model = ForecastModel(spec, params, L, Y.shape[1], 0.0, 1.0,
                          np.zeros(Y.shape[1]), np.ones(Y.shape[1]), scalar_output=scalar)
    train_loss = float(np.mean((X @ coef[:L] + coef[L] - Y) ** 2))
    val_loss = train_loss if Xv is None else float(np.mean((Xv @ coef[:L] + coef[L] - Yv) ** 2))
    model.log = [{"epoch": 0, "train_loss": train_loss, "val_loss": val_loss,
                  "best_val_loss": val_loss}]
    return model


def _fit_network(spec, X, Y, Xv, Yv, scalar):
    rng = np.random.default_rng(spec.seed)
    n, L = X.shape
    x_mean = float(X.mean())
    x_std = float(X.std()) or 1.0
    y_mean = Y.mean(axis=0)
    # zero-variance target columns hold nothing to learn; a zero output scale
    # predicts them as their training constant
    y_std = Y.std(axis=0)
    y_div = np.where(y_std == 0, 1.0, y_std)
    Xn = (X - x_mean) / x_std
    Yn = (Y - y_mean) / y_div
    if Xv is not None:
        Xvn = (Xv - x_mean) / x_std
        Yvn = (Yv - y_mean) / y_div

    params = init_params(spec, L, Y.shape[1], rng)
    opt = Adam(params, spec.learning_rate)
    best = (np.inf, {k: v.copy() for k, v in params.items()}, 0)
    log = []
    wait = 0
    bs = max(1, spec.batch_size)
    for epoch in range(spec.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            masks = dropout_masks(spec, idx.size, rng)
            loss, grads = loss_and_grads(spec, params, Xn[idx], Yn[idx], masks)
            opt.step(params, grads)
            total += loss * idx.size
        train_loss = total / n
        if Xv is not None:
            out, _ = forward(spec, params, Xvn)
            val_loss = float(np.mean((out - Yvn) ** 2))
        else:
            val_loss = train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergedTraining(epoch)
        if val_loss < best[0]:
            best = (val_loss, {k: v.copy() for k, v in params.items()}, epoch)
            wait = 0
        else:
            wait += 1
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                    "best_val_loss": best[0]})
        if wait >= spec.patience:
            break
    return ForecastModel(spec, best[1], L, Y.shape[1], x_mean, x_std, y_mean, y_std,
                         log, best[2], scalar)


def predict(model: ForecastModel, inputs):
    """Forecast for one input vector (returns a vector) or a batch of rows."""
    X = np.asarray(inputs, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_length:
        raise ShapeMismatch(f"expected inputs of length {model.input_length}, got {X.shape}")
    if model.spec.kind == "linear":
        out = X @ model.params["d0_W"] + model.params["d0_b"]
    else:
        out, _ = forward(model.spec, model.params, (X - model.x_mean) / model.x_std)
        out = out * model.y_std + model.y_mean
    if single:
        return out[0]
    return out[:, 0] if model.scalar_output else out


# --------------------------------------------------------------------------
# tuning

@dataclass(frozen=True)
class SearchSpace:
    base: LearnerSpec = LearnerSpec()
    recurrent_units: tuple = WIDTH_CHOICES
    hidden: tuple = WIDTH_CHOICES
    dropouts: tuple = DROPOUT_CHOICES

    def sample(self, rng, seed):
        n = len(self.base.hidden)
        return replace(
            self.base,
            recurrent_units=int(rng.choice(self.recurrent_units)),
            hidden=tuple(int(rng.choice(self.hidden)) for _ in range(n)),
            dropouts=tuple(float(rng.choice(self.dropouts)) for _ in range(n)),
            seed=seed,
        )


def tune_and_fit(space: SearchSpace, budget, train, val, seed=0):
    """Random search; returns the winning (spec, model)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng([int(seed), 7919])
    X, Y = _xy(train)
    n_out = 1 if Y.ndim == 1 else Y.shape[1]
    best = None
    for trial in range(budget):
        spec = space.sample(rng, int(rng.integers(2**31)))
        if space.base.kind == "linear":
            spec = space.base
        model = fit(spec, train, val)
        key = (model.best_val_loss, n_parameters(spec, X.shape[1], n_out), trial)
        if best is None or key < best[0]:
            best = (key, spec, model)
        if space.base.kind == "linear":
            break
    return best[1], best[2]


def tune(space: SearchSpace, budget, train, val, seed=0) -> LearnerSpec:
    return tune_and_fit(space, budget, train, val, seed)[0]


# --------------------------------------------------------------------------
# checkpoints

def _model_header(model: ForecastModel):
    return {
        "format": "decompens-model",
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "input_length": model.input_length,
        "output_length": model.output_length,
        "x_mean": model.x_mean,
        "x_std": model.x_std,
        "log": model.log,
        "best_epoch": model.best_epoch,
        "scalar_output": model.scalar_output,
    }


def model_arrays(model: ForecastModel, prefix=""):
    arrays = {f"{prefix}param/{k}": v for k, v in model.params.items()}
    arrays[f"{prefix}y_mean"] = np.asarray(model.y_mean)
    arrays[f"{prefix}y_std"] = np.asarray(model.y_std)
    arrays[f"{prefix}header"] = np.array(json.dumps(_model_header(model)))
    return arrays


def model_from_arrays(data, prefix=""):
    header = json.loads(str(data[f"{prefix}header"]))
    if header.get("format") != "decompens-model" or header.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a supported model checkpoint")
    plen = len(f"{prefix}param/")
    params = {k[plen:]: np.array(data[k]) for k in data.files
              if k.startswith(f"{prefix}param/")}
    return ForecastModel(LearnerSpec.from_dict(header["spec"]), params,
                         header["input_length"], header["output_length"],
                         header["x_mean"], header["x_std"],
                         np.array(data[f"{prefix}y_mean"]), np.array(data[f"{prefix}y_std"]),
                         header["log"], header["best_epoch"], header["scalar_output"])


def save_model(model: ForecastModel, path):
    with Path(path).open("wb") as fh:
        np.savez(fh, **model_arrays(model))


def load_model(path) -> ForecastModel:
    with np.load(path, allow_pickle=False) as data:
        return model_from_arrays(data)
