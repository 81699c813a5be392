import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_segment_loglik, log_trunc_poisson
from prosodic_hlm.distributions import log_gaussian
from prosodic_hlm.gibbs import sample_prior_state
from prosodic_hlm.likelihood import (active_word_cube, build_cube, letter_duration_table,
                                     letter_frame_loglik, prosody_frame_loglik,
                                     prosody_segment_loglik, word_segment_loglik)
from prosodic_hlm.model import BOUNDARY, INTERIOR, Hyperparameters, ObservationSequence


def small_world(seed, T=8, K=3, N=4, dmax=6, max_len=3, P=2):
    r = np.random.default_rng(seed)
    hp = Hyperparameters.defaults(2, P, max_letters=K, max_words=N, max_word_duration=dmax,
                                  max_word_length=max_len)
    state = sample_prior_state(hp, r)
    # pull the emission means near the data so nothing underflows trivially
    state.emission_means[:] = r.normal(size=(K, 2))
    state.duration_rates[:] = r.uniform(0.5, 6.0, size=K)
    seq = ObservationSequence(r.normal(size=(T, 2)), r.normal(size=(T, P)), "s")
    return hp, state, seq


def test_single_letter_frame_loglik_at_mode():
    hp, state, _ = small_world(0)
    state.emission_means[0] = 0.0
    state.emission_covs[0] = np.eye(2)
    seq = ObservationSequence(np.zeros((3, 2)), np.zeros((3, 2)))
    table = letter_frame_loglik(seq, state)
    assert np.allclose(table[0], -0.5 * 2 * math.log(2 * math.pi), atol=1e-14)


def test_frame_table_equals_direct_calls():
    hp, state, seq = small_world(1)
    table = letter_frame_loglik(seq, state)
    for j in range(state.n_letters):
        for t in range(seq.T):
            direct = log_gaussian(seq.spectral[t], state.emission_means[j], state.emission_covs[j])
            assert table[j, t] == pytest.approx(direct, abs=1e-12)


def test_prosody_single_frame_is_boundary_term():
    hp, state, seq = small_world(2)
    table = prosody_frame_loglik(seq, state)
    assert prosody_segment_loglik(seq, state, 3, 1) == table[BOUNDARY, 3]


def test_prosody_segment_manual_expansion():
    hp, state, seq = small_world(3)
    m, c = state.prosody_means, state.prosody_covs
    want = (log_gaussian(seq.prosody[0], m[INTERIOR], c[INTERIOR])
            + log_gaussian(seq.prosody[1], m[INTERIOR], c[INTERIOR])
            + log_gaussian(seq.prosody[2], m[BOUNDARY], c[BOUNDARY]))
    assert prosody_segment_loglik(seq, state, 0, 3) == pytest.approx(want, abs=1e-12)


def test_prosody_equal_components_carry_no_boundary_information():
    hp, state, seq = small_world(4)
    state.prosody_means[BOUNDARY] = state.prosody_means[INTERIOR]
    state.prosody_covs[BOUNDARY] = state.prosody_covs[INTERIOR]
    table = prosody_frame_loglik(seq, state)
    assert prosody_segment_loglik(seq, state, 2, 4) == pytest.approx(table[INTERIOR, 2:6].sum(), abs=1e-12)


def test_prosody_segment_rejects_out_of_range():
    hp, state, seq = small_world(5)
    with pytest.raises(ValueError):
        prosody_segment_loglik(seq, state, 6, 3)
    with pytest.raises(ValueError):
        prosody_segment_loglik(seq, state, 0, 0)


def test_one_letter_word_closed_form():
    hp, state, seq = small_world(6)
    fl = letter_frame_loglik(seq, state)
    got = word_segment_loglik([1], fl, state.duration_rates, 2, 4)
    want = log_trunc_poisson(4, state.duration_rates[1]) + fl[1, 2:6].sum()
    assert got == pytest.approx(want, abs=1e-12)


def test_two_letters_two_frames_unique_composition():
    hp, state, seq = small_world(7)
    fl = letter_frame_loglik(seq, state)
    r = state.duration_rates
    want = log_trunc_poisson(1, r[0]) + log_trunc_poisson(1, r[2]) + fl[0, 0] + fl[2, 1]
    assert word_segment_loglik([0, 2], fl, r, 0, 2) == pytest.approx(want, abs=1e-12)


def test_two_letters_four_frames_enumeration():
    hp, state, seq = small_world(8)
    fl = letter_frame_loglik(seq, state)
    r = state.duration_rates
    terms = []
    for a in (1, 2, 3):
        b = 4 - a
        terms.append(log_trunc_poisson(a, r[1]) + log_trunc_poisson(b, r[0])
                     + fl[1, 1:1 + a].sum() + fl[0, 1 + a:5].sum())
    want = max(terms) + math.log(sum(math.exp(t - max(terms)) for t in terms))
    assert word_segment_loglik([1, 0], fl, r, 1, 4) == pytest.approx(want, abs=1e-9)


def test_word_shorter_segment_is_impossible_and_empty_word_rejected():
    hp, state, seq = small_world(9)
    fl = letter_frame_loglik(seq, state)
    assert word_segment_loglik([0, 1, 2], fl, state.duration_rates, 0, 2) == -np.inf
    with pytest.raises(ValueError):
        word_segment_loglik([], fl, state.duration_rates, 0, 2)


@given(st.integers(0, 2**32 - 1), st.data())
def test_segment_loglik_matches_brute_force(seed, data):
    r = np.random.default_rng(seed)
    K = 3
    T = data.draw(st.integers(1, 8))
    L = data.draw(st.integers(1, 3))
    word = [int(x) for x in r.integers(K, size=L)]
    d = data.draw(st.integers(1, min(6, T)))
    t = data.draw(st.integers(0, T - d))
    fl = r.normal(scale=3.0, size=(K, T)) - 2.0
    rates = r.uniform(0.3, 8.0, size=K)
    got = word_segment_loglik(word, fl, rates, t, d)
    want = brute_segment_loglik(word, fl.tolist(), rates.tolist(), t, d)
    if want == -math.inf:
        assert got == -np.inf
    else:
        assert abs(got - want) < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_cube_matches_reference_recursion(seed):
    hp, state, seq = small_world(seed % 1000, T=12, dmax=7, max_len=3)
    cube = build_cube(seq, state, hp)
    fl = letter_frame_loglik(seq, state)
    r = np.random.default_rng(seed)
    for _ in range(20):
        a = int(r.integers(state.n_words))
        t = int(r.integers(seq.T))
        d = int(r.integers(1, hp.max_word_duration + 1))
        v = cube.values[a, t, d - 1]
        if t + d > seq.T or d < len(state.words[a]):
            assert v == -np.inf
            continue
        want = (word_segment_loglik(state.words[a], fl, state.duration_rates, t, d)
                + prosody_segment_loglik(seq, state, t, d))
        assert v == pytest.approx(want, abs=1e-9, rel=1e-12)


def test_cube_entries_below_word_length_are_impossible():
    hp, state, seq = small_world(11, T=10, dmax=6, max_len=3)
    cube = build_cube(seq, state, hp)
    for a, w in enumerate(state.words):
        assert np.all(cube.values[a, :, :len(w) - 1] == -np.inf)
        for t in range(seq.T):
            dm = min(hp.max_word_duration, seq.T - t)
            assert np.isfinite(cube.values[a, t, len(w) - 1:dm]).all()


def test_cube_monotone_truncation():
    hp, state, seq = small_world(12, T=9, dmax=9, max_len=3)
    fl = letter_frame_loglik(seq, state)
    dur = letter_duration_table(state.duration_rates, 30)
    small = active_word_cube(state.words[0], fl, dur, 9)
    big = active_word_cube(state.words[0], fl, dur, 30)
    assert np.array_equal(small, big[:, :9])
    assert np.all(big[:, 9:] == -np.inf)


def test_prosody_term_is_word_independent():
    hp, state, seq = small_world(13, T=10)
    other = ObservationSequence(seq.spectral, seq.prosody + 3.0, "s2")
    c1 = build_cube(seq, state, hp).values
    c2 = build_cube(other, state, hp).values
    with np.errstate(invalid="ignore"):
        d1 = c1[0] - c1[1]
        d2 = c2[0] - c2[1]
    fin = np.isfinite(d1)
    assert np.allclose(d1[fin], d2[fin], atol=1e-9)


def test_uniform_prosody_shifts_cube_by_shared_sum():
    hp, state, seq = small_world(14, T=10)
    state.prosody_means[BOUNDARY] = state.prosody_means[INTERIOR]
    state.prosody_covs[BOUNDARY] = state.prosody_covs[INTERIOR]
    with_p = build_cube(seq, state, hp).values
    bare = build_cube(seq.with_prosody_channels([]), state, hp).values
    table = prosody_frame_loglik(seq, state)[INTERIOR]
    for t, d in [(0, 1), (2, 3), (4, 6)]:
        assert with_p[0, t, d - 1] - bare[0, t, d - 1] == pytest.approx(table[t:t + d].sum(), abs=1e-9)


def test_long_sequences_stay_finite_and_accurate():
    """Rows that underflow the scaled recursion fall back to log space."""
    r = np.random.default_rng(3)
    K, T = 4, 200
    fl = r.normal(scale=30.0, size=(K, T)) - 50.0
    dur = letter_duration_table(np.array([3.0, 8.0, 20.0, 1.0]), 90)
    word = [0, 3, 1, 2]
    cube = active_word_cube(word, fl, dur, 90)
    rates = np.array([3.0, 8.0, 20.0, 1.0])
    for t, d in [(0, 4), (10, 90), (150, 50), (5, 37)]:
        want = word_segment_loglik(word, fl, rates, t, d)
        assert cube[t, d - 1] == pytest.approx(want, rel=1e-10)
