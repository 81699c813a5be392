"""Blocked Gibbs sampler over segmentations, dictionary and parameters.

Every random draw comes from a stream derived from ``(seed, sweep, role,
index)``, so a sweep is reproducible from the previous TrainState alone and
results do not depend on worker count.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .distributions import (SufficientStatsGaussian, SufficientStatsPoisson,
                            sample_crt_tables, sample_dirichlet,
                            sample_gamma_poisson_rate, sample_niw_gaussian)
from .letters import decode_letters, sample_letter_durations
from .likelihood import (build_cube, letter_duration_table, letter_frame_loglik,
                         prosody_frame_loglik)
from .metrics import adjusted_rand_index
from .model import (BOUNDARY, INTERIOR, Hyperparameters, ModelState, ObservationSequence,
                    Segmentation, letter_labels_from)
from .segmentation import backward_filter, forward_sample, word_duration_logpmf

# stream roles
_INIT, _GLOBAL, _SEGMENT, _DECODE, _ALIGN, _REFRESH = range(6)


def stream(seed: int, sweep: int, role: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sweep, role, index]))


@dataclass
class TraceEntry:
    sweep: int
    log_joint: float
    letter_ari: float = float("nan")
    word_ari: float = float("nan")
    wall_ms: float = 0.0


@dataclass
class TrainState:
    model: ModelState
    segmentations: list
    sweep_index: int
    rng_seed: int
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------- prior draws

def word_length_pmf(hp: Hyperparameters) -> np.ndarray:
    """Probabilities of letter counts ``1..max_word_length`` for prior words."""
    L = np.arange(1, hp.max_word_length + 1)
    if hp.word_length_mean is None:
        return np.full(L.size, 1.0 / L.size)
    logp = L * np.log(hp.word_length_mean) - gammaln(L + 1)
    p = np.exp(logp - logp.max())
    return p / p.sum()


def sample_word(model: ModelState, hp: Hyperparameters, rng: np.random.Generator) -> tuple:
    """Letter sequence from the letter bigram model with a prior letter
    count (see :func:`word_length_pmf`); a letter never repeats itself."""
    length = int(rng.choice(hp.max_word_length, p=word_length_pmf(hp))) + 1
    letters = [int(rng.choice(model.n_letters, p=model.beta_wm))]
    for _ in range(length - 1):
        p = model.pi_wm[letters[-1]].copy()
        p[letters[-1]] = 0.0
        if p.sum() <= 0:
            break
        letters.append(int(rng.choice(model.n_letters, p=p / p.sum())))
    return tuple(letters)


def sample_prior_state(hp: Hyperparameters, rng: np.random.Generator) -> ModelState:
    N, K = hp.max_words, hp.max_letters
    beta_lm = sample_dirichlet(np.full(N, hp.gamma_lm / N), rng)
    pi_lm = np.array([sample_dirichlet(hp.alpha_lm * beta_lm, rng) for _ in range(N)])
    beta_wm = sample_dirichlet(np.full(K, hp.gamma_wm / K), rng)
    pi_wm = np.array([sample_dirichlet(hp.alpha_wm * beta_wm, rng) for _ in range(K)])
    D, P = hp.spectral_dim, hp.prosody_dim
    means, covs = np.empty((K, D)), np.empty((K, D, D))
    for j in range(K):
        means[j], covs[j] = sample_niw_gaussian(hp.emission_niw, SufficientStatsGaussian.empty(D), rng)
    rates = rng.gamma(hp.duration_shape, 1.0 / hp.duration_rate, size=K)
    pm, pc = np.empty((2, P)), np.empty((2, P, P))
    pm[INTERIOR], pc[INTERIOR] = sample_niw_gaussian(hp.prosody_niw_interior,
                                                     SufficientStatsGaussian.empty(P), rng)
    pm[BOUNDARY], pc[BOUNDARY] = sample_niw_gaussian(hp.prosody_niw_boundary,
                                                     SufficientStatsGaussian.empty(P), rng)
    model = ModelState(beta_lm, pi_lm, beta_wm, pi_wm, [], means, covs, rates, pm, pc)
    model.words = [sample_word(model, hp, rng) for _ in range(N)]
    return model


# ------------------------------------------------------------ local updates

def _check_data(data: Sequence[ObservationSequence], hp: Hyperparameters):
    if len(data) == 0:
        raise ValueError("no sequences to train on")
    for seq in data:
        if seq.T < 1:
            raise ValueError(f"sequence {seq.id!r} is empty")
        if seq.spectral.shape[1] != hp.spectral_dim or seq.prosody.shape[1] != hp.prosody_dim:
            raise ValueError(
                f"sequence {seq.id!r} has dims ({seq.spectral.shape[1]}, {seq.prosody.shape[1]}),"
                f" hyperparameters expect ({hp.spectral_dim}, {hp.prosody_dim})")


def _segment_one(seq, model, hp, active, rng):
    frame_ll = letter_frame_loglik(seq, model)
    cube = build_cube(seq, model, hp, active, frame_ll)
    msgs = backward_filter(cube, model, hp)
    return forward_sample(msgs, cube, model, rng), frame_ll


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def align_letters(seg: Segmentation, model: ModelState, frame_ll: np.ndarray,
                  dur_table: np.ndarray, rng: np.random.Generator) -> Segmentation:
    """Fill letter durations and frame letter labels given the dictionary."""
    letter_durs = []
    for z, t, d in seg.segments():
        w = np.asarray(model.words[z], dtype=np.int64)
        letter_durs.append(sample_letter_durations(frame_ll[w, t:t + d], dur_table[w], rng))
    labels = letter_labels_from(model.words, seg.word_labels, letter_durs)
    return Segmentation(seg.word_labels, seg.word_durations, labels, letter_durs)


def resample_word_letters(word_index: int, segments, model: ModelState, hp: Hyperparameters,
                          rng: np.random.Generator, dur_table: Optional[np.ndarray] = None) -> tuple:
    """New letter sequence for one word.

    ``segments`` is a list of ``(frame_ll, t, d)`` with ``frame_ll`` the
    ``(n_letters, T)`` table of the segment's sequence.  One segment is
    chosen uniformly and decoded with the letter HSMM; this has the same
    distribution as decoding all segments and keeping a uniformly chosen one.
    Without segments the word is redrawn from the prior.  The decoded word
    is capped at the shortest assigned segment so it can still cover every
    segment it was sampled for.
    """
    if not segments:
        return sample_word(model, hp, rng)
    cap = min(hp.max_word_length, min(d for _, _, d in segments))
    frame_ll, t, d = segments[int(rng.integers(len(segments)))]
    if dur_table is None:
        dur_table = letter_duration_table(model.duration_rates, hp.max_word_duration)
    with np.errstate(divide="ignore"):
        log_init = np.log(model.beta_wm)
        log_trans = np.log(model.pi_wm)
    letters, _ = decode_letters(frame_ll[:, t:t + d], dur_table, log_init, log_trans,
                                cap, rng)
    return tuple(letters)


# ----------------------------------------------------------- global updates

def transition_counts(segmentations: Sequence[Segmentation], words, n_words: int, n_letters: int):
    """Word bigram/initial counts and token-weighted letter bigram/initial counts."""
    lm = np.zeros((n_words, n_words), dtype=np.int64)
    lm_init = np.zeros(n_words, dtype=np.int64)
    wm = np.zeros((n_letters, n_letters), dtype=np.int64)
    wm_init = np.zeros(n_letters, dtype=np.int64)
    for seg in segmentations:
        z = seg.word_labels
        lm_init[z[0]] += 1
        np.add.at(lm, (z[:-1], z[1:]), 1)
        for i in z:
            w = np.asarray(words[i])
            wm_init[w[0]] += 1
            np.add.at(wm, (w[:-1], w[1:]), 1)
    return lm, lm_init, wm, wm_init


def resample_transitions(counts: np.ndarray, init_counts: np.ndarray, beta: np.ndarray,
                         gamma: float, alpha: float, rng: np.random.Generator):
    """Weak-limit HDP update: auxiliary tables -> global weights -> rows."""
    K = beta.size
    tables = sample_crt_tables(counts, alpha * beta, rng)
    beta_new = sample_dirichlet(gamma / K + tables.sum(axis=0) + init_counts, rng)
    pi = np.array([sample_dirichlet(alpha * beta_new + counts[i], rng) for i in range(K)])
    return beta_new, pi


def emission_stats(data, segmentations, n_letters: int):
    D = data[0].spectral.shape[1]
    stats = [SufficientStatsGaussian.empty(D) for _ in range(n_letters)]
    x = np.concatenate([s.spectral for s in data])
    lab = np.concatenate([g.letter_labels for g in segmentations])
    for j in np.unique(lab):
        stats[j] = SufficientStatsGaussian.from_data(x[lab == j])
    return stats


def duration_stats(model: ModelState, segmentations, n_letters: int):
    per_letter = [[] for _ in range(n_letters)]
    for seg in segmentations:
        for z, durs in zip(seg.word_labels, seg.letter_durations):
            for l, r in zip(model.words[z], durs):
                per_letter[l].append(int(r))
    return [SufficientStatsPoisson.from_data(v) for v in per_letter]


def prosody_stats(data, segmentations):
    P = data[0].prosody.shape[1]
    Y = np.concatenate([s.prosody for s in data]).reshape(-1, P)
    F = np.concatenate([g.boundary_flags for g in segmentations])
    return (SufficientStatsGaussian.from_data(Y[F == 0]),
            SufficientStatsGaussian.from_data(Y[F == 1]))


def log_joint(model: ModelState, data, segmentations, hp: Hyperparameters) -> float:
    """Complete-data log-likelihood of observations and latent assignments.

    Uses the same factors as the segmentation messages: word transitions,
    word-level duration pmf, letter duration pmfs, frame emissions and
    prosody densities.
    """
    dur_table = letter_duration_table(model.duration_rates, hp.max_word_duration)
    with np.errstate(divide="ignore"):
        log_init, log_trans = np.log(model.beta_lm), np.log(model.pi_lm)
    total = 0.0
    for seq, seg in zip(data, segmentations):
        z = seg.word_labels
        total += log_init[z[0]] + log_trans[z[:-1], z[1:]].sum()
        wdur = word_duration_logpmf(model, z, max(hp.max_word_duration, int(seg.word_durations.max())))
        total += wdur[np.arange(z.size), seg.word_durations - 1].sum()
        for i, durs in zip(z, seg.letter_durations):
            total += dur_table[list(model.words[i]), durs].sum()
        frame_ll = letter_frame_loglik(seq, model)
        total += frame_ll[seg.letter_labels, np.arange(seq.T)].sum()
        pros = prosody_frame_loglik(seq, model)
        total += pros[seg.boundary_flags, np.arange(seq.T)].sum()
    return float(total)


def _scores(segmentations, labels):
    if labels is None:
        return float("nan"), float("nan")
    tl = np.concatenate([l for l, _ in labels])
    tw = np.concatenate([w for _, w in labels])
    pl = np.concatenate([g.letter_labels for g in segmentations])
    pw = np.concatenate([g.frame_word_labels() for g in segmentations])
    return adjusted_rand_index(tl, pl), adjusted_rand_index(tw, pw)


# ------------------------------------------------------------------- driver

def init(data: Sequence[ObservationSequence], hp: Hyperparameters, seed: int,
         workers: int = 1) -> TrainState:
    """Prior draw of the model plus segmentations sampled against it."""
    _check_data(data, hp)
    model = sample_prior_state(hp, stream(seed, 0, _INIT))
    active = list(range(hp.max_words))
    dur_table = letter_duration_table(model.duration_rates, hp.max_word_duration)

    def one(n):
        seg, frame_ll = _segment_one(data[n], model, hp, active, stream(seed, 0, _SEGMENT, n))
        return align_letters(seg, model, frame_ll, dur_table, stream(seed, 0, _ALIGN, n))

    segs = _map(one, range(len(data)), workers)
    return TrainState(model, segs, 0, int(seed), [])


def sweep(state: TrainState, data: Sequence[ObservationSequence], hp: Hyperparameters,
          labels=None, workers: int = 1) -> TrainState:
    """One full blocked Gibbs sweep; ``state`` is left untouched."""
    t0 = time.perf_counter()
    seed, s = state.rng_seed, state.sweep_index + 1
    model = state.model.copy()
    rng = stream(seed, s, _GLOBAL)

    # (1)-(2) segmentations over used words plus fresh candidates
    used = sorted({int(z) for g in state.segmentations for z in g.word_labels})
    unused = [i for i in range(hp.max_words) if i not in used]
    n_fresh = min(hp.fresh_words, len(unused))
    fresh = sorted(int(i) for i in rng.choice(unused, size=n_fresh, replace=False)) if n_fresh else []
    active = sorted(used + fresh)
    results = _map(lambda n: _segment_one(data[n], model, hp, active, stream(seed, s, _SEGMENT, n)),
                   range(len(data)), workers)
    segs = [r[0] for r in results]
    frame_lls = [r[1] for r in results]

    # (3) dictionary entries
    dur_table = letter_duration_table(model.duration_rates, hp.max_word_duration)
    assigned = {}
    for n, seg in enumerate(segs):
        for z, t, d in seg.segments():
            assigned.setdefault(z, []).append((frame_lls[n], t, d))
    for i in range(hp.max_words):
        if i in assigned:
            model.words[i] = resample_word_letters(i, assigned[i], model, hp,
                                                   stream(seed, s, _DECODE, i), dur_table)
    segs = _map(lambda n: align_letters(segs[n], model, frame_lls[n], dur_table,
                                        stream(seed, s, _ALIGN, n)),
                range(len(data)), workers)

    # (4) transitions
    lm, lm_init, wm, wm_init = transition_counts(segs, model.words, hp.max_words, hp.max_letters)
    model.beta_lm, model.pi_lm = resample_transitions(lm, lm_init, model.beta_lm,
                                                      hp.gamma_lm, hp.alpha_lm, rng)
    model.beta_wm, model.pi_wm = resample_transitions(wm, wm_init, model.beta_wm,
                                                      hp.gamma_wm, hp.alpha_wm, rng)

    # (5) letter emissions and durations; letters without data fall back to the prior
    for j, st in enumerate(emission_stats(data, segs, hp.max_letters)):
        model.emission_means[j], model.emission_covs[j] = sample_niw_gaussian(hp.emission_niw, st, rng)
    for j, st in enumerate(duration_stats(model, segs, hp.max_letters)):
        model.duration_rates[j] = sample_gamma_poisson_rate(hp.duration_shape, hp.duration_rate, st, rng)

    # (6) prosody
    if hp.prosody_dim:
        interior, boundary = prosody_stats(data, segs)
        model.prosody_means[INTERIOR], model.prosody_covs[INTERIOR] = \
            sample_niw_gaussian(hp.prosody_niw_interior, interior, rng)
        model.prosody_means[BOUNDARY], model.prosody_covs[BOUNDARY] = \
            sample_niw_gaussian(hp.prosody_niw_boundary, boundary, rng)

    # unused entries become fresh prior draws for the next sweep's candidates
    for i in range(hp.max_words):
        if i not in assigned:
            model.words[i] = sample_word(model, hp, stream(seed, s, _REFRESH, i))

    score = log_joint(model, data, segs, hp)
    letter_ari, word_ari = _scores(segs, labels)
    entry = TraceEntry(s, score, letter_ari, word_ari, 1000.0 * (time.perf_counter() - t0))
    return TrainState(model, segs, s, seed, state.trace + [entry])


def run(data: Sequence[ObservationSequence], hp: Hyperparameters, seed: int, n_sweeps: int,
        callbacks: Iterable[Callable[[TrainState], None]] = (), labels=None,
        state: Optional[TrainState] = None, workers: int = 1) -> TrainState:
    """Run sweeps until ``n_sweeps`` have been applied.

    Passing a checkpointed ``state`` resumes it; the result equals the
    uninterrupted run.
    """
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be at least 1")
    callbacks = list(callbacks)
    if state is None:
        state = init(data, hp, seed, workers)
    while state.sweep_index < n_sweeps:
        state = sweep(state, data, hp, labels, workers)
        for cb in callbacks:
            cb(state)
    return state
