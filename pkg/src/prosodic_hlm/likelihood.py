"""Segment likelihoods of words built from letter-level frame likelihoods.

A word of ``L`` letters explains ``d`` frames by summing over every way of
splitting the ``d`` frames into ``L`` nonempty consecutive runs, each run
scored by its letter's duration pmf and Gaussian frame likelihoods.  The sum
is computed with a forward recursion over letter positions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import special

from .distributions import log_gaussian_rows, log_poisson_duration
from .model import BOUNDARY, INTERIOR, Hyperparameters, ModelState, ObservationSequence

NEG_INF = -np.inf
# linear-domain results below this are recomputed in log space
_TINY = 1e-280


@dataclass
class LikelihoodCube:
    """``values[a, t, d - 1]``: log-likelihood of ``word_indices[a]`` on frames
    ``t .. t + d - 1``.  Entries with ``t + d > T`` or ``d < L`` are ``-inf``."""

    values: np.ndarray
    word_indices: np.ndarray
    words_hash: str

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def max_duration(self) -> int:
        return self.values.shape[2]


def letter_frame_loglik(seq: ObservationSequence, state: ModelState) -> np.ndarray:
    """``table[j, t] = log h(y_t | theta_j)``, shape ``(n_letters, T)``."""
    K = state.n_letters
    out = np.empty((K, seq.T))
    for j in range(K):
        out[j] = log_gaussian_rows(seq.spectral, state.emission_means[j], state.emission_covs[j])
    return out


def prosody_frame_loglik(seq: ObservationSequence, state: ModelState) -> np.ndarray:
    """Rows ``[interior, boundary]`` of per-frame prosody log-densities."""
    out = np.zeros((2, seq.T))
    if seq.prosody.shape[1] == 0:
        return out
    for q in (INTERIOR, BOUNDARY):
        out[q] = log_gaussian_rows(seq.prosody, state.prosody_means[q], state.prosody_covs[q])
    return out


def prosody_segment_loglik(seq: ObservationSequence, state: ModelState, t: int, d: int,
                           table: Optional[np.ndarray] = None) -> float:
    """Boundary density on the last frame plus interior densities on the rest."""
    if d < 1 or t < 0 or t + d > seq.T:
        raise ValueError(f"segment ({t}, {d}) outside a sequence of {seq.T} frames")
    if table is None:
        table = prosody_frame_loglik(seq, state)
    return float(table[INTERIOR, t:t + d - 1].sum() + table[BOUNDARY, t + d - 1])


def letter_duration_table(rates: np.ndarray, max_duration: int) -> np.ndarray:
    """``table[j, d]`` = truncated-Poisson log-pmf of duration ``d`` for letter
    ``j``; column 0 is ``-inf``."""
    d = np.arange(1, max_duration + 1)
    out = np.full((rates.size, max_duration + 1), NEG_INF)
    for j, r in enumerate(rates):
        out[j, 1:] = log_poisson_duration(d, float(r))
    return out


def word_segment_loglik(word: Sequence[int], frame_logliks: np.ndarray, duration_rates,
                        t: int, d: int) -> float:
    """Log-domain forward recursion for a single segment.

    ``alpha[k, m]`` is the log-probability that the first ``k`` letters
    exactly cover the first ``m`` frames of the segment.
    """
    L = len(word)
    if L == 0:
        raise ValueError("word must contain at least one letter")
    if d < 1 or t < 0 or t + d > frame_logliks.shape[1]:
        raise ValueError("segment outside the sequence")
    if d < L:
        return NEG_INF
    alpha = np.full(d + 1, NEG_INF)
    alpha[0] = 0.0
    for k, letter in enumerate(word):
        cum = np.concatenate([[0.0], np.cumsum(frame_logliks[letter, t:t + d])])
        logdur = np.full(d + 1, NEG_INF)
        logdur[1:] = log_poisson_duration(np.arange(1, d + 1), float(duration_rates[letter]))
        nxt = np.full(d + 1, NEG_INF)
        for m in range(k + 1, d + 1):
            prev = np.arange(k, m)
            terms = alpha[prev] + logdur[m - prev] + cum[m] - cum[prev]
            nxt[m] = special.logsumexp(terms)
        alpha = nxt
    return float(alpha[d])


@numba.njit(cache=True, nogil=True)
def _row_log(ll, lpd, L, t, dm, out_alpha):
    """Log-domain recursion for the single start frame ``t``; fills
    ``out_alpha[m]`` for segments of ``m <= dm`` frames."""
    prev = np.full(dm + 1, -np.inf)
    cur = np.full(dm + 1, -np.inf)
    terms = np.empty(dm + 1)
    prev[0] = 0.0
    for k in range(L):
        last = dm - (L - 1 - k)
        cur[:] = -np.inf
        for m in range(k + 1, last + 1):
            n = 0
            s = 0.0
            # walk m0 downwards so the emission sum grows one frame at a time
            for m0 in range(m - 1, k - 1, -1):
                s += ll[k, t + m0]
                a = prev[m0]
                if a == -np.inf:
                    continue
                terms[n] = a + lpd[k, m - m0] + s
                n += 1
            if n > 0:
                mx = terms[0]
                for q in range(1, n):
                    if terms[q] > mx:
                        mx = terms[q]
                acc = 0.0
                for q in range(n):
                    acc += np.exp(terms[q] - mx)
                cur[m] = mx + np.log(acc)
        prev, cur = cur, prev
    out_alpha[:] = prev


@numba.njit(cache=True, nogil=True, error_model="numpy", fastmath={"nsz", "arcp", "contract"})
def _word_cube(ll_word, lpd_word, dmax, out):
    """Fill ``out[t, d-1]`` for one word.

    ``ll_word[k, t]`` and ``lpd_word[k, d]`` are the frame log-likelihoods and
    duration log-pmfs of the word's ``k``-th letter.  All start frames are
    advanced together in the linear domain, with frame likelihoods scaled by
    their per-frame maximum over the word's letters; rows that come out too
    small to trust are recomputed in log space.
    """
    L, T = ll_word.shape
    span = min(dmax, T)
    offset = np.empty(T)
    for t in range(T):
        mx = ll_word[0, t]
        for k in range(1, L):
            if ll_word[k, t] > mx:
                mx = ll_word[k, t]
        offset[t] = mx
    cum = np.zeros(T + 1)
    for t in range(T):
        cum[t + 1] = cum[t] + offset[t]
    # zero padding past the end kills segments that would overrun the sequence
    e = np.zeros((L, T + span))
    for k in range(L):
        for t in range(T):
            e[k, t] = np.exp(ll_word[k, t] - offset[t])
    pd = np.exp(lpd_word)
    prev = np.zeros((span + 1, T))
    cur = np.zeros((span + 1, T))
    r = np.empty(T)
    prev[0, :] = 1.0
    for k in range(L):
        cur[:, :] = 0.0
        last = span - (L - 1 - k)
        # before the first letter only the empty prefix has mass
        for m0 in range(k, last if k > 0 else 1):
            pm0 = prev[m0]
            r[:] = 1.0
            for m in range(m0 + 1, last + 1):
                p = pd[k, m - m0]
                c = cur[m]
                for t in range(T):
                    r[t] *= e[k, t + m - 1]
                    c[t] += pm0[t] * p * r[t]
        prev, cur = cur, prev
    row = np.empty(span + 1)
    for t in range(T):
        dm = min(span, T - t)
        for d in range(1, dmax + 1):
            out[t, d - 1] = -np.inf
        if dm < L:
            continue
        ok = True
        for d in range(L, dm + 1):
            if not prev[d, t] > _TINY:
                ok = False
                break
        if ok:
            for d in range(L, dm + 1):
                out[t, d - 1] = np.log(prev[d, t]) + cum[t + d] - cum[t]
        else:
            _row_log(ll_word, lpd_word, L, t, dm, row[:dm + 1])
            for d in range(L, dm + 1):
                out[t, d - 1] = row[d]


def active_word_cube(word: Sequence[int], frame_ll: np.ndarray, dur_table: np.ndarray,
                     max_duration: int) -> np.ndarray:
    """``(T, max_duration)`` block of the cube for one word."""
    idx = np.asarray(word, dtype=np.int64)
    out = np.empty((frame_ll.shape[1], max_duration))
    _word_cube(np.ascontiguousarray(frame_ll[idx]),
               np.ascontiguousarray(dur_table[idx, :max_duration + 1]), max_duration, out)
    return out


def prosody_cube_term(prosody_ll: np.ndarray, max_duration: int) -> np.ndarray:
    """``(T, max_duration)`` prosody factor shared by every word."""
    T = prosody_ll.shape[1]
    cum0 = np.concatenate([[0.0], np.cumsum(prosody_ll[INTERIOR])])
    t = np.arange(T)[:, None]
    d = np.arange(1, max_duration + 1)[None, :]
    end = t + d
    valid = end <= T
    endc = np.minimum(end, T)
    out = cum0[endc - 1] - cum0[np.broadcast_to(t, endc.shape)] + prosody_ll[BOUNDARY, endc - 1]
    return np.where(valid, out, NEG_INF)


def build_cube(seq: ObservationSequence, state: ModelState, hp: Hyperparameters,
               word_indices: Optional[Sequence[int]] = None,
               frame_ll: Optional[np.ndarray] = None) -> LikelihoodCube:
    """Segment log-likelihoods for every active word, start frame and duration."""
    if word_indices is None:
        word_indices = range(state.n_words)
    word_indices = np.asarray(list(word_indices), dtype=np.int64)
    dmax = hp.max_word_duration
    if frame_ll is None:
        frame_ll = letter_frame_loglik(seq, state)
    dur_table = letter_duration_table(state.duration_rates, dmax)
    pros = prosody_cube_term(prosody_frame_loglik(seq, state), dmax)
    values = np.empty((word_indices.size, seq.T, dmax))
    for a, i in enumerate(word_indices):
        values[a] = active_word_cube(state.words[i], frame_ll, dur_table, dmax) + pros
    return LikelihoodCube(values, word_indices, state.words_hash(word_indices))
