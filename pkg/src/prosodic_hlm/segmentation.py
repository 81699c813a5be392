"""Backward filtering / forward sampling of word segmentations."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import logsumexp

from .distributions import log_poisson_min_duration, sample_from_log
from .likelihood import LikelihoodCube
from .model import Hyperparameters, ModelState, Segmentation


class TruncationError(RuntimeError):
    """No admissible segmentation exists under the current truncation levels."""


@dataclass
class BackwardMessages:
    """``beta[t, a]``: log-likelihood of frames ``t..`` given active word ``a``
    ends at frame ``t`` (0-based count of consumed frames).  ``beta_star[t, a]``:
    same, given word ``a`` starts right after frame ``t``."""

    beta: np.ndarray
    beta_star: np.ndarray
    word_duration: np.ndarray
    word_indices: np.ndarray


def word_duration_logpmf(state: ModelState, word_indices, max_duration: int) -> np.ndarray:
    """``out[a, d-1] = log p(d | word)``: Poisson with the summed letter rates,
    restricted to ``d >= len(word)`` and renormalised."""
    d = np.arange(1, max_duration + 1)
    out = np.empty((len(word_indices), max_duration))
    for a, i in enumerate(word_indices):
        w = state.words[i]
        rate = float(state.duration_rates[list(w)].sum())
        out[a] = log_poisson_min_duration(d, rate, len(w))
    return out


@numba.njit(cache=True, nogil=True)
def _backward(cube, wdur, log_trans, beta, beta_star):
    N, T, dmax = cube.shape
    for a in range(N):
        beta[T, a] = 0.0
    for t in range(T - 1, -1, -1):
        dm = min(dmax, T - t)
        for a in range(N):
            mx = -np.inf
            for d in range(1, dm + 1):
                v = beta[t + d, a] + wdur[a, d - 1] + cube[a, t, d - 1]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                beta_star[t, a] = -np.inf
                continue
            acc = 0.0
            for d in range(1, dm + 1):
                v = beta[t + d, a] + wdur[a, d - 1] + cube[a, t, d - 1]
                if v > -np.inf:
                    acc += np.exp(v - mx)
            beta_star[t, a] = mx + np.log(acc)
        for a in range(N):
            mx = -np.inf
            for b in range(N):
                v = beta_star[t, b] + log_trans[a, b]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                beta[t, a] = -np.inf
                continue
            acc = 0.0
            for b in range(N):
                v = beta_star[t, b] + log_trans[a, b]
                if v > -np.inf:
                    acc += np.exp(v - mx)
            beta[t, a] = mx + np.log(acc)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def backward_filter(cube: LikelihoodCube, state: ModelState, hp: Hyperparameters) -> BackwardMessages:
    if cube.words_hash != state.words_hash(cube.word_indices):
        raise ValueError("likelihood cube was built against a different dictionary")
    idx = cube.word_indices
    T = cube.T
    wdur = word_duration_logpmf(state, idx, cube.max_duration)
    log_trans = np.ascontiguousarray(_log(state.pi_lm[np.ix_(idx, idx)]))
    beta = np.empty((T + 1, idx.size))
    beta_star = np.full((T + 1, idx.size), -np.inf)
    _backward(cube.values, wdur, log_trans, beta, beta_star)
    return BackwardMessages(beta, beta_star, wdur, idx)


def forward_sample(messages: BackwardMessages, cube: LikelihoodCube, state: ModelState,
                   rng: np.random.Generator) -> Segmentation:
    """Draw a word segmentation from its conditional posterior.

    The first word is drawn with weights ``beta_lm``; later words with the
    bigram row of the previous word.
    """
    idx = messages.word_indices
    beta, beta_star, wdur = messages.beta, messages.beta_star, messages.word_duration
    T, dmax = cube.T, cube.max_duration
    log_init = _log(state.beta_lm[idx])
    log_trans = _log(state.pi_lm[np.ix_(idx, idx)])
    labels, durations = [], []
    t, prev = 0, -1
    while t < T:
        base = log_init if prev < 0 else log_trans[prev]
        logits = base + beta_star[t]
        if not np.isfinite(logits).any():
            raise TruncationError(
                f"no admissible word at frame {t}; max_word_duration may be too small")
        a = sample_from_log(logits, rng)
        dm = min(dmax, T - t)
        dlog = wdur[a, :dm] + cube.values[a, t, :dm] + beta[t + 1:t + dm + 1, a]
        if not np.isfinite(dlog).any():
            raise TruncationError(f"no admissible duration at frame {t}")
        d = sample_from_log(dlog, rng) + 1
        labels.append(int(idx[a]))
        durations.append(d)
        t += d
        prev = a
    return Segmentation(np.array(labels), np.array(durations))


def log_marginal(messages: BackwardMessages, state: ModelState) -> float:
    """``log p(observations)`` summed over all segmentations of the active words."""
    return float(logsumexp(_log(state.beta_lm[messages.word_indices]) + messages.beta_star[0]))
