"""Noise-assisted decompositions: EEMD trial averaging and CEEMDAN."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SeriesTooShort
from .signal_core import Decomposition, SiftConfig, _values, emd, find_extrema, first_imf


@dataclass
class NoiseConfig:
    """Trial count, noise coefficient(s) and seed.

    ``schedule`` optionally lists per-stage coefficients for CEEMDAN; stages
    beyond its end reuse the last entry, and an empty schedule means the
    constant ``epsilon`` everywhere.
    """

    trials: int = 25
    epsilon: float = 0.2
    seed: int = 0
    schedule: tuple = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.schedule = tuple(float(e) for e in self.schedule)
        if not self.epsilon > 0 or any(not e > 0 for e in self.schedule):
            raise ValueError("noise coefficients must be positive")

    def stage_epsilon(self, stage):
        if not self.schedule:
            return self.epsilon
        return self.schedule[min(stage, len(self.schedule) - 1)]


@dataclass
class TrialMatrix:
    """K x M_max x T IMF values, zero-padded where a trial produced fewer IMFs."""

    values: np.ndarray
    counts: list = field(default_factory=list)

    def mean(self):
        return self.values.mean(axis=0)


def trial_noise(seed, trial, n):
    """Unit white noise for one trial; depends only on (seed, trial)."""
    return np.random.default_rng([int(seed), int(trial)]).standard_normal(n)


def align_trials(trials) -> TrialMatrix:
    """Stack per-trial IMF arrays by extraction index, zero-padding short ones."""
    trials = [t.imfs if isinstance(t, Decomposition) else np.asarray(t) for t in trials]
    if not trials:
        raise ValueError("need at least one trial")
    n = trials[0].shape[-1]
    counts = [t.shape[0] for t in trials]
    out = np.zeros((len(trials), max(counts), n))
    for k, t in enumerate(trials):
        out[k, :t.shape[0]] = t
    return TrialMatrix(out, counts)


def _noise_scale(s):
    return float(np.std(s, ddof=1)) if s.size > 1 else 0.0


def eemd(series, noise: NoiseConfig | None = None, sift: SiftConfig | None = None) -> Decomposition:
    noise = noise or NoiseConfig()
    sift = sift or SiftConfig()
    s = _values(series)
    if s.size < 4:
        raise SeriesTooShort(f"EEMD needs at least 4 points, got {s.size}")
    scale = noise.epsilon * _noise_scale(s)
    trials = [emd(s + scale * trial_noise(noise.seed, k, s.size), sift)
              for k in range(noise.trials)]
    matrix = align_trials(trials)
    imfs = matrix.mean()
    # residue closes the sum by construction; the mean IMFs alone do not
    residue = s - imfs.sum(axis=0)
    return Decomposition(imfs, residue, "EEMD", {"trial_imf_counts": matrix.counts})


def ceemdan(series, noise: NoiseConfig | None = None, sift: SiftConfig | None = None) -> Decomposition:
    """Complete ensemble EMD with adaptive noise.

    Stage 0 averages the first IMF of ``s + eps_0 * w_k``; stage m averages
    the first IMF of ``r_m + eps_m * E_m(w_k)`` where ``E_m(w_k)`` is the
    m-th IMF of the k-th noise realization. Trials whose noise has no m-th
    IMF (or whose perturbed residual yields no IMF) are left out of that
    stage's mean.
    """
    noise = noise or NoiseConfig()
    sift = sift or SiftConfig()
    s = _values(series)
    n = s.size
    if n < 4:
        raise SeriesTooShort(f"CEEMDAN needs at least 4 points, got {n}")
    sigma = _noise_scale(s)
    white = [trial_noise(noise.seed, k, n) for k in range(noise.trials)]
    diag = {"stage_contributors": [], "stage_collapse": None}

    imfs = []
    residual = s.copy()
    if find_extrema(residual).total > sift.residue_extrema:
        # noise modes are only needed once the signal has something to sift
        noise_modes = [emd(w, sift).imfs for w in white]
        stage = 0
        while len(imfs) < sift.max_imfs:
            if find_extrema(residual).total <= sift.residue_extrema:
                break
            eps = noise.stage_epsilon(stage) * sigma
            acc = np.zeros(n)
            used = 0
            for k in range(noise.trials):
                if stage == 0:
                    perturb = white[k]
                elif noise_modes[k].shape[0] >= stage:
                    perturb = noise_modes[k][stage - 1]
                else:
                    continue
                h = first_imf(residual + eps * perturb, sift)
                if h is None:
                    continue
                acc += h
                used += 1
            diag["stage_contributors"].append(used)
            if used == 0:
                diag["stage_collapse"] = stage
                break
            imf = acc / used
            imfs.append(imf)
            residual = residual - imf
            stage += 1

    stack = np.array(imfs) if imfs else np.zeros((0, n))
    return Decomposition(stack, s - stack.sum(axis=0), "CEEMDAN", diag)


def decompose(series, method, noise: NoiseConfig | None = None,
              sift: SiftConfig | None = None) -> Decomposition:
    method = method.upper()
    if method == "EMD":
        return emd(series, sift)
    if method == "EEMD":
        return eemd(series, noise, sift)
    if method == "CEEMDAN":
        return ceemdan(series, noise, sift)
    raise ValueError(f"unknown decomposition method {method!r}")
