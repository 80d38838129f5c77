import numpy as np
import pytest

from decompens import noise_ensembles
from decompens.errors import SeriesTooShort
from decompens.noise_ensembles import (NoiseConfig, align_trials, ceemdan, decompose, eemd,
                                       trial_noise)
from decompens.signal_core import Decomposition, emd
from oracles import pearson, two_tone


def _tol(s):
    return 1e-9 * max(1.0, np.abs(s).max())


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(trials=0)
    with pytest.raises(ValueError):
        NoiseConfig(epsilon=0)
    with pytest.raises(ValueError):
        NoiseConfig(schedule=(0.2, -1))
    cfg = NoiseConfig(epsilon=0.2, schedule=(0.3, 0.1))
    assert [cfg.stage_epsilon(i) for i in range(4)] == [0.3, 0.1, 0.1, 0.1]
    assert NoiseConfig().stage_epsilon(7) == 0.2


def test_default_trials_and_amplitude():
    cfg = NoiseConfig()
    assert cfg.trials == 25 and cfg.epsilon == 0.2


def test_eemd_uses_configured_trial_count():
    x = np.random.default_rng(0).standard_normal(128)
    d = eemd(x, NoiseConfig(25, 0.2, 0))
    assert len(d.diagnostics["trial_imf_counts"]) == 25


def test_eemd_degenerate_matches_emd():
    x = np.cumsum(np.random.default_rng(1).standard_normal(200))
    a, b = eemd(x, NoiseConfig(1, 1e-12, 0)), emd(x)
    assert a.n_imfs == b.n_imfs
    assert np.max(np.abs(a.imfs - b.imfs)) <= 1e-6 * np.abs(x).max()


def test_eemd_residue_closes_sum():
    x = np.random.default_rng(2).standard_normal(256)
    d = eemd(x, NoiseConfig(5, 0.2, 0))
    assert np.max(np.abs(x - d.reconstruct())) <= _tol(x)


def test_eemd_matches_direct_ensemble_mean():
    x = np.random.default_rng(3).standard_normal(150)
    cfg = NoiseConfig(4, 0.2, 11)
    d = eemd(x, cfg)
    sigma = np.std(x, ddof=1)
    trials = [emd(x + 0.2 * sigma * trial_noise(11, k, x.size)).imfs for k in range(4)]
    m = max(t.shape[0] for t in trials)
    direct = np.zeros((m, x.size))
    for t in trials:
        direct[:t.shape[0]] += t
    np.testing.assert_allclose(d.imfs, direct / 4, atol=1e-12)


@pytest.mark.xfail(strict=True, reason="added noise occupies the first mean IMF at eps=0.2; "
                                        "see the decisions ledger")
@pytest.mark.parametrize("seed", [0, 1])
def test_eemd_two_tone_first_imf_tracks_fast_tone(seed):
    s, fast, _ = two_tone(512)
    d = eemd(s, NoiseConfig(25, 0.2, seed))
    mid = slice(51, 461)
    assert pearson(d.imfs[0][mid], fast[mid]) > 0.95


def test_eemd_error_shrinks_with_trials():
    # median over a seed family of max|s - sum of mean IMFs|
    medians = []
    for K in (1, 5, 25):
        errs = []
        for seed in range(10):
            x = np.cumsum(np.random.default_rng(seed).standard_normal(256))
            d = eemd(x, NoiseConfig(K, 0.2, seed))
            errs.append(np.max(np.abs(x - d.imfs.sum(axis=0))))
        medians.append(np.median(errs))
    assert medians[0] >= medians[1] >= medians[2]


def test_noise_is_zero_mean():
    # each sample exceeds 3 sigma/sqrt(K) with probability 0.27%, so over many
    # samples the bound is checked as a violation rate rather than for every one
    n, eps, sigma = 2000, 0.2, 1.0
    for K in (25, 100, 400):
        mean = np.mean([eps * sigma * trial_noise(0, k, n) for k in range(K)], axis=0)
        bound = 3 * eps * sigma / np.sqrt(K)
        assert np.mean(np.abs(mean) > bound) <= 0.01
        assert abs(mean.mean()) <= bound / np.sqrt(n)


def test_trial_noise_is_order_independent():
    a = trial_noise(5, 3, 50)
    _ = [trial_noise(5, k, 50) for k in range(10)]
    assert np.array_equal(a, trial_noise(5, 3, 50))
    assert not np.array_equal(a, trial_noise(5, 4, 50))


def test_eemd_too_short():
    with pytest.raises(SeriesTooShort):
        eemd([1.0, 2.0, 3.0])


# --- ceemdan ---------------------------------------------------------------

def test_ceemdan_reconstructs_exactly():
    x = np.random.default_rng(0).standard_normal(300).cumsum()
    d = ceemdan(x, NoiseConfig(25, 0.2, 0))
    assert np.max(np.abs(x - d.reconstruct())) <= _tol(x)
    assert d.method_tag == "CEEMDAN"


def test_ceemdan_monotone_has_no_imfs():
    x = np.linspace(0, 5, 64)
    d = ceemdan(x, NoiseConfig(5, 0.2, 0))
    assert d.n_imfs == 0
    assert np.array_equal(d.residue, x)


def test_ceemdan_degenerate_first_imf_matches_emd():
    x = np.cumsum(np.random.default_rng(4).standard_normal(200))
    a, b = ceemdan(x, NoiseConfig(1, 1e-12, 0)), emd(x)
    assert np.max(np.abs(a.imfs[0] - b.imfs[0])) <= 1e-6 * np.abs(x).max()


def test_ceemdan_stage_collapse_terminates(monkeypatch):
    # noise realizations that yield no IMFs leave stage 1 without contributors
    def empty_emd(series, sift=None):
        v = np.asarray(series, float)
        return Decomposition(np.zeros((0, v.size)), v.copy(), "EMD", {})

    monkeypatch.setattr(noise_ensembles, "emd", empty_emd)
    x = np.random.default_rng(5).standard_normal(128)
    d = ceemdan(x, NoiseConfig(4, 0.2, 0))
    assert d.diagnostics["stage_collapse"] == 1
    assert d.n_imfs == 1
    assert np.max(np.abs(x - d.reconstruct())) <= _tol(x)


def test_ceemdan_schedule_changes_result():
    x = np.random.default_rng(6).standard_normal(128)
    a = ceemdan(x, NoiseConfig(4, 0.2, 0))
    b = ceemdan(x, NoiseConfig(4, 0.2, 0, schedule=(0.2, 0.05)))
    assert np.array_equal(a.imfs[0], b.imfs[0])
    assert not np.array_equal(a.imfs[1], b.imfs[1])


@pytest.mark.parametrize("method", ["EMD", "EEMD", "CEEMDAN"])
def test_decompose_is_deterministic(method):
    x = np.random.default_rng(7).standard_normal(200)
    a = decompose(x, method, NoiseConfig(3, 0.2, 1))
    b = decompose(x, method.lower(), NoiseConfig(3, 0.2, 1))
    assert np.array_equal(a.imfs, b.imfs) and np.array_equal(a.residue, b.residue)


def test_decompose_unknown_method():
    with pytest.raises(ValueError):
        decompose(np.zeros(10), "VMD")


# --- align_trials ------------------------------------------------------------

def test_align_equal_counts():
    trials = [np.ones((3, 5)) * k for k in range(3)]
    m = align_trials(trials)
    assert m.values.shape == (3, 3, 5) and m.counts == [3, 3, 3]


def test_align_pads_with_exact_zeros():
    m = align_trials([np.ones((2, 4)), np.ones((3, 4))])
    assert m.values.shape == (2, 3, 4)
    assert np.array_equal(m.values[0, 2], np.zeros(4))


def test_align_mean_is_ensemble_mean():
    rng = np.random.default_rng(8)
    trials = [rng.standard_normal((int(c), 6)) for c in (2, 4, 3)]
    direct = np.zeros((4, 6))
    for t in trials:
        for i, row in enumerate(t):
            direct[i] += row
    np.testing.assert_allclose(align_trials(trials).mean(), direct / 3, atol=1e-15)


def test_align_requires_a_trial():
    with pytest.raises(ValueError):
        align_trials([])
