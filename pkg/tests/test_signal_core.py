import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from decompens.errors import InsufficientExtrema, SeriesTooShort
from decompens.signal_core import (SiftConfig, TimeSeries, build_envelopes,
                                   count_zero_crossings, emd, find_extrema,
                                   interpolate_envelope, is_imf, sift_once)
from oracles import (akima_envelope, brute_extrema, loop_zero_crossings, pearson,
                     two_tone)

CFG = SiftConfig()


# --- TimeSeries -------------------------------------------------------------

def test_timeseries_rejects_empty_nonfinite_and_bad_interval():
    with pytest.raises(ValueError):
        TimeSeries([])
    with pytest.raises(ValueError):
        TimeSeries([1.0, np.nan])
    with pytest.raises(ValueError):
        TimeSeries([1.0, 2.0], interval_minutes=0)


def test_timeseries_slice_keeps_origin():
    s = TimeSeries(np.arange(10.0), 1.0, 5)
    part = s.slice(3, 6)
    assert part.origin_index == 8
    assert list(part.values) == [3.0, 4.0, 5.0]


# --- find_extrema -----------------------------------------------------------

def test_extrema_triangle():
    e = find_extrema([0, 1, 0, -1, 0])
    assert e.maxima == [(1, 1.0)]
    assert e.minima == [(3, -1.0)]


def test_extrema_monotone_is_empty():
    e = find_extrema([1, 2, 3, 4, 5])
    assert e.maxima == [] and e.minima == []


def test_extrema_match_brute_force_on_seed0_uniform_noise():
    x = np.random.default_rng(0).uniform(size=64)
    e = find_extrema(x)
    mx, mn = brute_extrema(x)
    assert list(e.max_idx) == mx
    assert list(e.min_idx) == mn


def test_extrema_plateau_contributes_midpoint():
    e = find_extrema([0, 1, 2, 2, 2, 1, 0])
    assert list(e.max_idx) == [3]
    e = find_extrema([3, 1, 1, 1, 1, 3])
    assert list(e.min_idx) == [2]  # even-length plateau: lower middle


def test_extrema_too_short():
    with pytest.raises(SeriesTooShort):
        find_extrema([1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(3, 80),
              elements=st.floats(-1e6, 1e6, allow_nan=False)).filter(
                  lambda a: np.all(np.diff(a) != 0)))
def test_extrema_agree_with_oracle_on_plateau_free_input(x):
    e = find_extrema(x)
    mx, mn = brute_extrema(x)
    assert list(e.max_idx) == mx and list(e.min_idx) == mn


# --- count_zero_crossings ---------------------------------------------------

def test_zero_crossings_alternating():
    assert count_zero_crossings([1, -1, 1, -1]) == 3


def test_zero_crossings_zero_run_counts_once():
    assert count_zero_crossings([1, 0, -1]) == 1
    assert count_zero_crossings([1, 0, 0, 0, -1]) == 1
    assert count_zero_crossings([1, 0, 1]) == 0


def test_zero_crossings_sampled_sine_two_periods():
    # 64 samples of sin over two periods, endpoint excluded: roots at
    # t = 16, 32, 48 lie strictly inside; t = 0 is the start point. The
    # sign changes are therefore 3, matching the analytic root count.
    x = np.sin(2 * np.pi * 2 * np.arange(64) / 64)
    x[np.abs(x) < 1e-12] = 0.0
    assert count_zero_crossings(x) == 3 == loop_zero_crossings(x)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 3.0]), max_size=60))
def test_zero_crossings_agree_with_loop(x):
    assert count_zero_crossings(x) == loop_zero_crossings(x)


# --- envelopes --------------------------------------------------------------

def test_envelopes_of_pure_tone():
    n, A = 400, 3.0
    x = A * np.sin(2 * np.pi * 10 * np.arange(n) / n + 0.3)
    env = build_envelopes(x, find_extrema(x), CFG)
    mid = slice(n // 4, 3 * n // 4)
    assert np.all(np.abs(env.upper[mid] - A) < 0.05 * A)
    assert np.all(np.abs(env.lower[mid] + A) < 0.05 * A)
    assert np.all(np.abs(env.mean[mid]) < 0.05 * A)
    assert np.array_equal(env.mean, (env.upper + env.lower) / 2)


def test_two_equal_knots_give_constant_linear_envelope():
    for kind in ("linear", "akima", "cubic"):
        u = interpolate_envelope([0.0, 10.0], [2.0, 2.0], 11, kind)
        assert np.array_equal(u, np.full(11, 2.0))


def test_fallback_ladder_raises_below_two_knots():
    with pytest.raises(InsufficientExtrema):
        interpolate_envelope([3.0], [1.0], 10, "akima")


def test_mean_envelope_matches_independent_akima():
    s, _, _ = two_tone(512)
    s = s + 0.01 * np.random.default_rng(0).standard_normal(512)
    ext = find_extrema(s)
    env = build_envelopes(s, ext, CFG)
    upper = akima_envelope(ext.max_idx, ext.max_val, s.size)
    lower = akima_envelope(ext.min_idx, ext.min_val, s.size)
    np.testing.assert_allclose(env.upper, upper, atol=1e-9, rtol=0)
    np.testing.assert_allclose(env.lower, lower, atol=1e-9, rtol=0)
    np.testing.assert_allclose(env.mean, (upper + lower) / 2, atol=1e-9, rtol=0)


def test_envelopes_need_both_kinds_of_extrema():
    with pytest.raises(InsufficientExtrema):
        build_envelopes([0, 1, 2, 3, 4], find_extrema([0, 1, 2, 3, 4]), CFG)


# --- sifting ----------------------------------------------------------------

def test_sift_once_with_zero_mean_envelope_is_identity():
    # equal-height maxima and minima give constant envelopes +1 / -1
    x = np.array([0, 1, 0, -1, 0, 1, 0, -1, 0, 1, 0, -1, 0], float)
    for kind in ("akima", "cubic", "linear"):
        cfg = SiftConfig(spline_kind=kind)
        assert np.array_equal(build_envelopes(x, find_extrema(x), cfg).mean, np.zeros(x.size))
        assert np.array_equal(sift_once(x, cfg), x)


def test_sift_once_composes_envelope_oracle():
    x = np.array([0, 1, 0, -1, 0, 1, 0, -1, 0], float)
    ext = find_extrema(x)
    upper = akima_envelope(ext.max_idx, ext.max_val, x.size)
    lower = akima_envelope(ext.min_idx, ext.min_val, x.size)
    np.testing.assert_allclose(sift_once(x, CFG), x - (upper + lower) / 2, atol=1e-12)


def test_sift_once_on_tone_changes_little():
    n, A = 512, 2.0
    x = A * np.sin(2 * np.pi * 12 * np.arange(n) / n)
    mid = slice(n // 10, 9 * n // 10)
    assert np.max(np.abs(sift_once(x, CFG) - x)[mid]) < 0.05 * A


# --- is_imf -----------------------------------------------------------------

def test_pure_tone_is_imf():
    x = np.sin(2 * np.pi * 6 * np.arange(300) / 300)
    assert is_imf(x, CFG)


def test_ramp_is_not_imf():
    ramp = np.linspace(-1, 1, 50)
    check = is_imf(ramp, CFG)
    assert check.n_extrema == 0 and check.n_zero_crossings == 1   # condition (a) holds
    assert check.mean_ratio > CFG.mean_tolerance                  # condition (b) fails
    assert not check


def test_offset_tone_is_not_imf():
    x = np.sin(2 * np.pi * 6 * np.arange(300) / 300) + 0.3
    check = is_imf(x, CFG)
    # mean envelope ~0.3 on a range of 2.0: ratio ~0.15 > 0.05
    assert check.mean_ratio == pytest.approx(0.15, abs=0.02)
    assert not check


# --- emd --------------------------------------------------------------------

def test_emd_monotone_has_no_imfs():
    x = np.arange(1.0, 9.0)
    d = emd(x)
    assert d.n_imfs == 0
    assert np.array_equal(d.residue, x)


def test_emd_separates_two_tones():
    s, fast, slow = two_tone(512)
    d = emd(s)
    assert d.n_imfs == 2
    mid = slice(51, 461)
    assert pearson(d.imfs[0][mid], fast[mid]) > 0.95
    assert pearson(d.imfs[1][mid], slow[mid]) > 0.95


def test_emd_random_walk_reconstructs():
    x = np.cumsum(np.random.default_rng(0).standard_normal(256))
    d = emd(x)
    assert np.max(np.abs(d.reconstruct() - x)) <= 1e-9 * max(1, np.abs(x).max())


def test_emd_too_short():
    with pytest.raises(SeriesTooShort):
        emd([1.0, 2.0, 1.0])


def test_emd_is_deterministic():
    x = np.random.default_rng(3).standard_normal(300)
    a, b = emd(x), emd(x)
    assert np.array_equal(a.imfs, b.imfs) and np.array_equal(a.residue, b.residue)


def test_emd_imfs_ordered_fast_to_slow():
    x = np.random.default_rng(4).standard_normal(512).cumsum()
    d = emd(x)
    crossings = [count_zero_crossings(m) for m in d.imfs]
    assert crossings[0] == max(crossings)


def test_accepted_imfs_satisfy_conditions():
    x = np.random.default_rng(5).standard_normal(400)
    d = emd(x)
    for k, forced in enumerate(d.diagnostics["force_accepted"]):
        if not forced:
            assert is_imf(d.imfs[k], CFG)


def test_residue_stop_rule_respects_config():
    s, _, _ = two_tone(512)
    # with a residue allowed two extrema the one-cycle slow tone stays in the residue
    d = emd(s, SiftConfig(residue_extrema=2))
    assert d.n_imfs == 1


def test_max_imfs_caps_decomposition():
    x = np.random.default_rng(6).standard_normal(512)
    assert emd(x, SiftConfig(max_imfs=2)).n_imfs == 2


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(4, 200),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_emd_reconstruction_property(x):
    d = emd(x)
    assert np.max(np.abs(d.reconstruct() - x)) <= 1e-9 * max(1.0, np.abs(x).max())
