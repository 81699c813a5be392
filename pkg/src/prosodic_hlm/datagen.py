"""Labelled synthetic corpora sampled from the generative model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .model import (BOUNDARY, INTERIOR, ModelState, ObservationSequence, Segmentation,
                    derive_boundary_flags, letter_labels_from)


@dataclass
class CorpusSpec:
    n_words: int = 5
    n_letters: int = 5
    letters_per_word: Tuple[int, int] = (2, 4)
    n_sequences: int = 10
    words_per_sequence: Tuple[int, int] = (4, 6)
    zipf_alpha: float = 0.0
    spectral_dim: int = 3
    emission_separation: float = 5.0
    emission_sd: float = 1.0
    # letter means are placed inside [-emission_range, emission_range]^dim; when
    # unset the cube half-width is 1.2 separations, so the separation sets how
    # close letters typically sit and not only the closest pair
    emission_range: Optional[float] = None
    mean_letter_duration: float = 8.0
    max_word_duration: int = 90
    prosody_boundary_mean: Tuple[float, ...] = (1.0, 1.0)
    prosody_interior_mean: Tuple[float, ...] = (0.0, 0.0)
    seed: int = 0

    def validate(self):
        for name in ("n_words", "n_letters", "n_sequences", "spectral_dim", "max_word_duration"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive count")
        lo, hi = self.letters_per_word
        if not 1 <= lo <= hi:
            raise ValueError("letters_per_word must be a range 1 <= lo <= hi")
        lo, hi = self.words_per_sequence
        if not 1 <= lo <= hi:
            raise ValueError("words_per_sequence must be a range 1 <= lo <= hi")
        if self.zipf_alpha < 0:
            raise ValueError("zipf_alpha must be nonnegative")
        for name in ("emission_separation", "emission_sd", "mean_letter_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.emission_range is not None and not self.emission_range > 0:
            raise ValueError("emission_range must be positive")
        if len(self.prosody_boundary_mean) != len(self.prosody_interior_mean):
            raise ValueError("prosody_boundary_mean and prosody_interior_mean differ in length")
        if self.letters_per_word[0] > self.max_word_duration:
            raise ValueError("words cannot fit in max_word_duration frames")
        # distinct words need enough letter sequences without adjacent repeats
        lo, hi = self.letters_per_word
        available = sum(self.n_letters * (self.n_letters - 1) ** (L - 1) for L in range(lo, hi + 1))
        if available < self.n_words:
            raise ValueError("not enough distinct letter sequences for n_words")

    @property
    def half_width(self) -> float:
        if self.emission_range is not None:
            return float(self.emission_range)
        return 1.2 * self.emission_separation * self.emission_sd

    @property
    def prosody_dim(self) -> int:
        return len(self.prosody_boundary_mean)


@dataclass
class GroundTruth:
    letter_labels: np.ndarray
    word_labels: np.ndarray          # per frame
    word_durations: np.ndarray
    boundary_flags: np.ndarray
    segmentation: Segmentation = field(repr=False)


def zipf_weights(n: int, alpha: float) -> np.ndarray:
    """Probabilities proportional to ``rank ** -alpha`` for ranks ``1..n``."""
    if n < 1 or alpha < 0:
        raise ValueError("need n >= 1 and alpha >= 0")
    w = np.arange(1, n + 1, dtype=float) ** -float(alpha)
    return w / w.sum()


def place_means(n: int, dim: int, separation: float, half_width: float,
                rng: np.random.Generator, attempts: int = 20000) -> np.ndarray:
    """Random points in a cube with every pairwise distance >= ``separation``."""
    # a dim-ball packing bound rules out hopeless requests quickly
    from math import gamma, pi
    r = separation / 2.0
    ball = pi ** (dim / 2) / gamma(dim / 2 + 1) * r ** dim
    if n * ball > (2 * half_width + separation) ** dim:
        raise ValueError(f"{n} letters with separation {separation} do not fit in dimension {dim}")
    pts = []
    for _ in range(attempts):
        p = rng.uniform(-half_width, half_width, size=dim)
        if all(np.linalg.norm(p - q) >= separation for q in pts):
            pts.append(p)
            if len(pts) == n:
                return np.array(pts)
    raise ValueError(f"could not place {n} letters with separation {separation} in dimension {dim}")


def sample_model(spec: CorpusSpec, rng: np.random.Generator) -> ModelState:
    """Generating parameters for a synthetic corpus."""
    spec.validate()
    K, N, D = spec.n_letters, spec.n_words, spec.spectral_dim
    sd = spec.emission_sd
    means = place_means(K, D, spec.emission_separation * sd, spec.half_width, rng)
    covs = np.repeat((sd ** 2 * np.eye(D))[None], K, axis=0)
    words, seen = [], set()
    lo, hi = spec.letters_per_word
    while len(words) < N:
        L = int(rng.integers(lo, hi + 1))
        w = [int(rng.integers(K))]
        while len(w) < L:
            nxt = int(rng.integers(K - 1)) if K > 1 else 0
            w.append(nxt + (nxt >= w[-1]) if K > 1 else 0)
        w = tuple(w)
        if w not in seen:
            seen.add(w)
            words.append(w)
    weights = zipf_weights(N, spec.zipf_alpha)
    P = spec.prosody_dim
    pm = np.empty((2, P))
    pm[INTERIOR] = spec.prosody_interior_mean
    pm[BOUNDARY] = spec.prosody_boundary_mean
    pc = np.repeat(np.eye(P)[None], 2, axis=0)
    return ModelState(
        beta_lm=weights.copy(), pi_lm=np.tile(weights, (N, 1)),
        beta_wm=np.full(K, 1.0 / K), pi_wm=np.full((K, K), 1.0 / K),
        words=words, emission_means=means, emission_covs=covs,
        duration_rates=np.full(K, float(spec.mean_letter_duration)),
        prosody_means=pm, prosody_covs=pc,
    )


def _letter_durations(rates, max_total, rng):
    """Per-letter Poisson durations (zeros redrawn), redrawn until they fit."""
    for _ in range(10000):
        d = rng.poisson(rates)
        while (d == 0).any():
            d[d == 0] = rng.poisson(rates[d == 0])
        if d.sum() <= max_total:
            return d
    raise ValueError("word durations keep exceeding max_word_duration")


def generate(spec: CorpusSpec):
    """Sample ``(sequences, truths, model)``.

    Word tokens are drawn i.i.d. from the Zipf weights, with dictionary
    index ``i`` taking rank ``i + 1``; the word bigram model is not used.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    model = sample_model(spec, rng)
    weights = model.beta_lm
    chol = [np.linalg.cholesky(c) for c in model.emission_covs]
    sequences, truths = [], []
    for n in range(spec.n_sequences):
        S = int(rng.integers(spec.words_per_sequence[0], spec.words_per_sequence[1] + 1))
        z = rng.choice(spec.n_words, size=S, p=weights)
        letter_durs = [
            _letter_durations(model.duration_rates[list(model.words[i])], spec.max_word_duration, rng)
            for i in z
        ]
        word_durs = np.array([d.sum() for d in letter_durs])
        x = letter_labels_from(model.words, z, letter_durs)
        T = x.size
        noise = rng.standard_normal((T, spec.spectral_dim))
        y = model.emission_means[x] + np.einsum("tij,tj->ti", np.asarray(chol)[x], noise)
        F = derive_boundary_flags(word_durs, T)
        Y = model.prosody_means[F] + rng.standard_normal((T, spec.prosody_dim))
        seg = Segmentation(z, word_durs, x, letter_durs)
        sequences.append(ObservationSequence(y, Y, id=f"seq{n:04d}"))
        truths.append(GroundTruth(x, np.repeat(z, word_durs), word_durs, F, seg))
    return sequences, truths, model


def rank_frequency(word_tokens) -> np.ndarray:
    """``(rank, count)`` rows sorted by decreasing count."""
    _, counts = np.unique(np.asarray(word_tokens), return_counts=True)
    counts = np.sort(counts)[::-1]
    return np.column_stack([np.arange(1, counts.size + 1), counts])


def loglog_slope(table: np.ndarray) -> float:
    """Least-squares slope of log count against log rank."""
    x, y = np.log(table[:, 0]), np.log(table[:, 1])
    return float(np.polyfit(x, y, 1)[0])
