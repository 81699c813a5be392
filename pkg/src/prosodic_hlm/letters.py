"""Letter-level sampling inside one word segment.

``decode_letters`` draws a fresh letter sequence for a segment from a letter
HSMM (bigram letter transitions, Poisson durations, Gaussian frames) with at
most ``max_letters_per_word`` letters.  A letter never follows itself inside a
word: the transition rows are renormalised over the other letters.  ``sample_letter_durations`` draws how
a fixed letter sequence divides the segment's frames.
"""
from __future__ import annotations

import numba
import numpy as np
from scipy.special import logsumexp

from .distributions import sample_from_log


@numba.njit(cache=True, nogil=True)
def _lse(buf, n):
    if n == 0:
        return -np.inf
    mx = buf[0]
    for q in range(1, n):
        if buf[q] > mx:
            mx = buf[q]
    if mx == -np.inf:
        return -np.inf
    acc = 0.0
    for q in range(n):
        acc += np.exp(buf[q] - mx)
    return mx + np.log(acc)


@numba.njit(cache=True, nogil=True)
def _letter_hsmm_backward(ll, lpd, log_trans, lmax, S, B):
    """``S[p, n, j]``: letter ``j`` is the ``n``-th letter and starts at offset
    ``p``; ``B[p, n, j]``: ``n`` letters done, the last is ``j``, ``p`` frames
    consumed.  Both are log-likelihoods of the remaining frames."""
    K, d = ll.shape
    buf = np.empty(max(d, K) + 1)
    S[:, :, :] = -np.inf
    B[:, :, :] = -np.inf
    for n in range(1, lmax + 1):
        for j in range(K):
            B[d, n, j] = 0.0
    for p in range(d - 1, -1, -1):
        for j in range(K):
            # emission sums for runs p..p+r-1
            for n in range(1, lmax + 1):
                s = 0.0
                c = 0
                for r in range(1, d - p + 1):
                    s += ll[j, p + r - 1]
                    v = B[p + r, n, j]
                    if v == -np.inf:
                        continue
                    buf[c] = lpd[j, r] + s + v
                    c += 1
                S[p, n, j] = _lse(buf, c)
        if p >= 1:
            for n in range(1, lmax):
                for j in range(K):
                    for j2 in range(K):
                        buf[j2] = log_trans[j, j2] + S[p, n + 1, j2]
                    B[p, n, j] = _lse(buf, K)


def exclude_self_transitions(log_trans: np.ndarray) -> np.ndarray:
    """Log transition rows with the diagonal removed and renormalised."""
    lt = np.array(log_trans, dtype=np.float64)
    np.fill_diagonal(lt, -np.inf)
    norm = logsumexp(lt, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(norm), lt - norm, -np.inf)


def decode_letters(ll: np.ndarray, lpd: np.ndarray, log_init: np.ndarray,
                   log_trans: np.ndarray, max_letters_per_word: int,
                   rng: np.random.Generator):
    """Sample ``(letters, durations)`` for one segment.

    ``ll`` is ``(K, d)`` frame log-likelihoods, ``lpd`` is ``(K, >= d + 1)``
    duration log-pmfs indexed by duration.
    """
    K, d = ll.shape
    lmax = int(min(max_letters_per_word, d))
    log_trans = exclude_self_transitions(log_trans)
    S = np.empty((d + 1, lmax + 2, K))
    B = np.empty((d + 1, lmax + 2, K))
    _letter_hsmm_backward(np.ascontiguousarray(ll), np.ascontiguousarray(lpd[:, :d + 1]),
                          log_trans, lmax, S, B)
    cum = np.concatenate([np.zeros((K, 1)), np.cumsum(ll, axis=1)], axis=1)
    letters, durs = [], []
    p, n = 0, 1
    j = sample_from_log(log_init + S[0, 1], rng)
    while True:
        r = np.arange(1, d - p + 1)
        logits = lpd[j, r] + cum[j, p + r] - cum[j, p] + B[p + r, n, j]
        run = sample_from_log(logits, rng) + 1
        letters.append(j)
        durs.append(run)
        p += run
        if p == d:
            break
        j = sample_from_log(log_trans[j] + S[p, n + 1], rng)
        n += 1
    return letters, durs


def letter_hsmm_loglik(ll, lpd, log_init, log_trans, max_letters_per_word) -> float:
    K, d = ll.shape
    lmax = int(min(max_letters_per_word, d))
    S = np.empty((d + 1, lmax + 2, K))
    B = np.empty((d + 1, lmax + 2, K))
    _letter_hsmm_backward(np.ascontiguousarray(ll), np.ascontiguousarray(lpd[:, :d + 1]),
                          exclude_self_transitions(log_trans), lmax, S, B)
    return float(logsumexp(log_init + S[0, 1]))


@numba.njit(cache=True, nogil=True)
def _composition_forward(ll_word, lpd_word, alpha):
    """``alpha[k, m]``: first ``k`` letters exactly cover ``m`` frames."""
    L, d = ll_word.shape
    buf = np.empty(d + 1)
    alpha[:, :] = -np.inf
    alpha[0, 0] = 0.0
    for k in range(L):
        for m in range(k + 1, d - (L - 1 - k) + 1):
            s = 0.0
            c = 0
            for m0 in range(m - 1, k - 1, -1):
                s += ll_word[k, m0]
                a = alpha[k, m0]
                if a == -np.inf:
                    continue
                buf[c] = a + lpd_word[k, m - m0] + s
                c += 1
            alpha[k + 1, m] = _lse(buf, c)


def sample_letter_durations(ll_word: np.ndarray, lpd_word: np.ndarray,
                            rng: np.random.Generator) -> np.ndarray:
    """Split a segment among a fixed letter sequence.

    ``ll_word[k, m]`` is the log-likelihood of segment frame ``m`` under the
    word's ``k``-th letter, ``lpd_word[k, r]`` the log-pmf of run length ``r``.
    """
    L, d = ll_word.shape
    if d < L:
        raise ValueError("segment shorter than the word")
    alpha = np.empty((L + 1, d + 1))
    _composition_forward(np.ascontiguousarray(ll_word),
                         np.ascontiguousarray(lpd_word[:, :d + 1]), alpha)
    cum = np.concatenate([np.zeros((L, 1)), np.cumsum(ll_word, axis=1)], axis=1)
    durs = np.empty(L, dtype=np.int64)
    end = d
    for k in range(L - 1, -1, -1):
        starts = np.arange(k, end)
        logits = alpha[k, starts] + lpd_word[k, end - starts] + cum[k, end] - cum[k, starts]
        start = int(starts[sample_from_log(logits, rng)])
        durs[k] = end - start
        end = start
    return durs
