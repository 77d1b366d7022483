import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import cmfb_analysis_bruteforce, cmfb_tap, cmfb_tap_mp
from subband_svm.filterbank import (SubbandSet, analyze, design_cmfb, n_coefficients,
                                    orthogonality_residual, synthesize)


def test_sixteen_channels_have_32_taps_and_are_orthogonal():
    bank = design_cmfb(16)
    assert bank.filters.shape == (16, 32)
    assert orthogonality_residual(bank) < 1e-12


@pytest.mark.parametrize("S", [0, -3, 2.5])
def test_bad_channel_count_rejected(S):
    with pytest.raises(ValueError):
        design_cmfb(S)


def test_single_channel_matches_high_precision_evaluation():
    bank = design_cmfb(1)
    ref = [float(cmfb_tap_mp(1, 1, k)) for k in (1, 2)]
    assert np.max(np.abs(bank.filters[0] - ref)) <= 1e-15
    assert bank.filters[0, 0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("S", [1, 2, 3, 4, 7, 16, 32])
def test_every_tap_matches_closed_form(S):
    bank = design_cmfb(S)
    ref = np.array([[float(cmfb_tap_mp(S, s, k)) for k in range(1, 2 * S + 1)] for s in range(1, S + 1)])
    assert np.max(np.abs(bank.filters - ref)) <= 1e-15
    fast = np.array([[cmfb_tap(S, s, k) for k in range(1, 2 * S + 1)] for s in range(1, S + 1)])
    assert np.allclose(bank.filters, fast, atol=1e-14)


@pytest.mark.parametrize("S", [2, 4, 5, 8, 16, 32])
def test_orthogonality_for_several_sizes(S):
    assert orthogonality_residual(design_cmfb(S)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(S=st.sampled_from([1, 2, 3, 4, 8]),
       x=arrays(np.float64, st.integers(1, 70), elements=st.floats(-10, 10)))
def test_analysis_matches_direct_summation(S, x):
    got = analyze(x, design_cmfb(S)).components
    ref = cmfb_analysis_bruteforce(x, S)
    assert got.shape == ref.shape == (S, n_coefficients(len(x), S))
    assert np.allclose(got, ref, atol=1e-12, rtol=1e-12)


def test_zero_signal_gives_zero_components():
    sb = analyze(np.zeros(100), design_cmfb(8))
    assert not np.any(sb.components)


def test_round_trip_random_signal(rng):
    bank = design_cmfb(16)
    x = rng.standard_normal(4096)
    assert np.max(np.abs(synthesize(analyze(x, bank), bank) - x)) < 1e-9


def test_round_trip_impulse():
    bank = design_cmfb(16)
    x = np.zeros(257)
    x[100] = 1.0
    assert np.allclose(synthesize(analyze(x, bank), bank), x, atol=1e-12)


@pytest.mark.parametrize("band", [0, 5, 15])
def test_zeroing_a_subband_removes_exactly_its_energy(rng, band):
    bank = design_cmfb(16)
    # silent margins of 2S samples keep every synthesis tail inside the signal
    x = np.zeros(2048)
    x[32:-32] = rng.standard_normal(2048 - 64)
    sb = analyze(x, bank)
    comps = sb.components.copy()
    removed = float(np.sum(comps[band] ** 2))
    comps[band] = 0.0
    y = synthesize(SubbandSet(comps, sb.length, sb.S), bank)
    assert abs(np.sum((x - y) ** 2) - removed) < 1e-9


@settings(max_examples=30, deadline=None)
@given(S=st.sampled_from([2, 4, 16]),
       x=arrays(np.float64, st.integers(1, 300), elements=st.floats(-1e3, 1e3)))
def test_energy_is_preserved(S, x):
    sb = analyze(x, design_cmfb(S))
    assert sb.energy == pytest.approx(float(np.sum(x**2)), rel=1e-10, abs=1e-9)


def test_synthesis_rejects_mismatched_bank(rng):
    sb = analyze(rng.standard_normal(64), design_cmfb(4))
    with pytest.raises(ValueError):
        synthesize(sb, design_cmfb(8))


def test_analysis_rejects_empty_input():
    with pytest.raises(ValueError):
        analyze(np.zeros(0), design_cmfb(4))


def test_tap_dump_has_one_line_per_channel():
    lines = design_cmfb(4).taps_text().splitlines()
    assert len(lines) == 4 and all(len(l.split()) == 8 for l in lines)
