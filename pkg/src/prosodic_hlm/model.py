"""Domain types shared by every part of the sampler.

Letters are indexed ``0..max_letters-1`` and words ``0..max_words-1``.  A
word is a tuple of letter indices.  Prosody Gaussians are stored with index
0 for interior frames (``F_t = 0``) and index 1 for word-final frames
(``F_t = 1``).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

INTERIOR = 0
BOUNDARY = 1


@dataclass(frozen=True)
class NIWParams:
    """Normal-inverse-Wishart prior over a Gaussian mean and covariance."""

    mu0: np.ndarray
    kappa0: float
    sigma0: np.ndarray
    nu0: float

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        sigma0 = np.asarray(self.sigma0, dtype=float).reshape(mu0.size, mu0.size)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)
        if self.kappa0 <= 0:
            raise ValueError("kappa0 must be positive")
        if mu0.size and self.nu0 <= mu0.size - 1:
            raise ValueError("nu0 must exceed dimension - 1")
        if mu0.size:
            if not np.allclose(sigma0, sigma0.T):
                raise ValueError("sigma0 must be symmetric")
            try:
                np.linalg.cholesky(sigma0)
            except np.linalg.LinAlgError as exc:
                raise ValueError("sigma0 must be positive definite") from exc

    @property
    def dim(self) -> int:
        return self.mu0.size

    @classmethod
    def standard(cls, dim: int, mu0: float = 0.0, kappa0: float = 0.01) -> "NIWParams":
        """Isotropic prior with ``sigma0 = I`` and ``nu0 = dim + 2``."""
        return cls(np.full(dim, float(mu0)), kappa0, np.eye(dim), dim + 2.0)


@dataclass(frozen=True)
class Hyperparameters:
    emission_niw: NIWParams
    prosody_niw_interior: NIWParams
    prosody_niw_boundary: NIWParams
    gamma_lm: float = 10.0
    alpha_lm: float = 10.0
    gamma_wm: float = 10.0
    alpha_wm: float = 10.0
    duration_shape: float = 200.0
    duration_rate: float = 10.0
    max_letters: int = 10
    max_words: int = 10
    max_word_duration: int = 90
    max_word_length: int = 10
    # unused dictionary slots offered to the segmentation sampler per sweep
    fresh_words: int = 1
    # letter count of prior word draws: Poisson with this mean restricted to
    # 1..max_word_length, or uniform on that range when None
    word_length_mean: Optional[float] = None

    def __post_init__(self):
        for name in ("gamma_lm", "alpha_lm", "gamma_wm", "alpha_wm",
                     "duration_shape", "duration_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_letters", "max_words", "max_word_duration", "max_word_length"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.max_word_length > self.max_word_duration:
            raise ValueError("max_word_length must not exceed max_word_duration")
        if self.fresh_words < 0:
            raise ValueError("fresh_words must be nonnegative")
        if self.word_length_mean is not None and not self.word_length_mean > 0:
            raise ValueError("word_length_mean must be positive")
        if self.prosody_niw_interior.dim != self.prosody_niw_boundary.dim:
            raise ValueError("prosody priors must share a dimension")

    @property
    def spectral_dim(self) -> int:
        return self.emission_niw.dim

    @property
    def prosody_dim(self) -> int:
        return self.prosody_niw_interior.dim

    @classmethod
    def defaults(cls, spectral_dim: int, prosody_dim: int = 2, **overrides) -> "Hyperparameters":
        """Settings used for the vowel-corpus experiment, sized to the data."""
        return cls(
            emission_niw=NIWParams.standard(spectral_dim, 0.0, 0.01),
            prosody_niw_interior=NIWParams.standard(prosody_dim, 0.0, 100.0),
            prosody_niw_boundary=NIWParams.standard(prosody_dim, 1.0, 2.0),
            **overrides,
        )


@dataclass
class ModelState:
    """All global parameters of the model.

    ``emission_means``/``emission_covs`` hold one Gaussian per letter;
    ``prosody_means``/``prosody_covs`` hold the interior (0) and boundary (1)
    Gaussians.
    """

    beta_lm: np.ndarray
    pi_lm: np.ndarray
    beta_wm: np.ndarray
    pi_wm: np.ndarray
    words: list
    emission_means: np.ndarray
    emission_covs: np.ndarray
    duration_rates: np.ndarray
    prosody_means: np.ndarray
    prosody_covs: np.ndarray

    @property
    def n_letters(self) -> int:
        return self.beta_wm.size

    @property
    def n_words(self) -> int:
        return self.beta_lm.size

    def copy(self) -> "ModelState":
        return ModelState(
            self.beta_lm.copy(), self.pi_lm.copy(), self.beta_wm.copy(), self.pi_wm.copy(),
            [tuple(w) for w in self.words], self.emission_means.copy(),
            self.emission_covs.copy(), self.duration_rates.copy(),
            self.prosody_means.copy(), self.prosody_covs.copy(),
        )

    def words_hash(self, indices: Optional[Sequence[int]] = None) -> str:
        idx = range(len(self.words)) if indices is None else indices
        text = ";".join(f"{i}:" + ",".join(map(str, self.words[i])) for i in idx)
        return hashlib.sha1(text.encode()).hexdigest()


@dataclass
class ObservationSequence:
    spectral: np.ndarray
    prosody: np.ndarray
    id: str = ""

    def __post_init__(self):
        self.spectral = np.atleast_2d(np.asarray(self.spectral, dtype=float))
        prosody = np.asarray(self.prosody, dtype=float)
        if prosody.ndim == 1:
            prosody = prosody.reshape(-1, 1) if prosody.size else prosody.reshape(self.spectral.shape[0], 0)
        self.prosody = prosody
        if self.spectral.shape[0] < 1:
            raise ValueError("sequence must contain at least one frame")
        if self.spectral.shape[0] != self.prosody.shape[0]:
            raise ValueError("spectral and prosody frame counts differ")
        if not (np.isfinite(self.spectral).all() and np.isfinite(self.prosody).all()):
            raise ValueError("observations contain NaN or Inf")

    @property
    def T(self) -> int:
        return self.spectral.shape[0]

    def with_prosody_channels(self, channels: Sequence[int]) -> "ObservationSequence":
        return ObservationSequence(self.spectral, self.prosody[:, list(channels)], self.id)


def derive_boundary_flags(word_durations, T: int) -> np.ndarray:
    """Indicator that a word ends at each frame.

    >>> derive_boundary_flags([3, 2], 5).tolist()
    [0, 0, 1, 0, 1]
    """
    d = np.asarray(word_durations, dtype=np.int64)
    if d.ndim != 1 or (d < 1).any():
        raise ValueError("durations must be positive integers")
    if int(d.sum()) != T:
        raise ValueError(f"durations sum to {int(d.sum())}, expected {T}")
    flags = np.zeros(T, dtype=np.int8)
    flags[np.cumsum(d) - 1] = 1
    return flags


@dataclass
class Segmentation:
    """Word- and letter-level latent assignments for one sequence.

    Letter fields stay ``None`` until the letters inside each word segment
    have been aligned.
    """

    word_labels: np.ndarray
    word_durations: np.ndarray
    letter_labels: Optional[np.ndarray] = None
    letter_durations: Optional[list] = None

    def __post_init__(self):
        self.word_labels = np.asarray(self.word_labels, dtype=np.int64)
        self.word_durations = np.asarray(self.word_durations, dtype=np.int64)
        if self.word_labels.shape != self.word_durations.shape:
            raise ValueError("one duration per word is required")
        if (self.word_durations < 1).any():
            raise ValueError("word durations must be positive")
        if self.letter_durations is not None:
            self.letter_durations = [np.asarray(d, dtype=np.int64) for d in self.letter_durations]
            for d, D in zip(self.letter_durations, self.word_durations):
                if int(d.sum()) != int(D) or (d < 1).any():
                    raise ValueError("letter durations must partition their word")
        if self.letter_labels is not None:
            self.letter_labels = np.asarray(self.letter_labels, dtype=np.int64)
            if self.letter_labels.size != self.T:
                raise ValueError("letter labels must cover every frame")

    @property
    def T(self) -> int:
        return int(self.word_durations.sum())

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.word_durations)[:-1]]).astype(np.int64)

    @property
    def boundary_flags(self) -> np.ndarray:
        return derive_boundary_flags(self.word_durations, self.T)

    def frame_word_labels(self) -> np.ndarray:
        return np.repeat(self.word_labels, self.word_durations)

    def segments(self):
        """Yield ``(word, start, duration)`` triples."""
        for z, t, d in zip(self.word_labels, self.starts, self.word_durations):
            yield int(z), int(t), int(d)


def letter_labels_from(words: Sequence[Sequence[int]], word_labels, letter_durations) -> np.ndarray:
    parts = [np.repeat(np.asarray(words[z], dtype=np.int64), d)
             for z, d in zip(word_labels, letter_durations)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list:
        return [k for k, v in self.checks.items() if not v]

    def _record(self, name: str, passed: bool, message: str = ""):
        self.checks[name] = self.checks.get(name, True) and bool(passed)
        if not passed and message:
            self.messages.append(f"{name}: {message}")


def _is_spd(m: np.ndarray) -> bool:
    if m.size == 0:
        return True
    if not np.allclose(m, m.T, rtol=0, atol=1e-10 * max(1.0, np.abs(m).max())):
        return False
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def validate_state(state: ModelState, hp: Hyperparameters) -> ValidationReport:
    """Check every ModelState invariant; never mutates ``state``."""
    rep = ValidationReport()
    K, N = hp.max_letters, hp.max_words

    rep._record("shapes", state.beta_lm.shape == (N,) and state.pi_lm.shape == (N, N)
                and state.beta_wm.shape == (K,) and state.pi_wm.shape == (K, K)
                and len(state.words) == N and state.duration_rates.shape == (K,)
                and state.emission_means.shape[0] == K and state.emission_covs.shape[0] == K
                and state.prosody_means.shape[0] == 2 and state.prosody_covs.shape[0] == 2,
                "array shapes do not match truncation levels")

    for name in ("beta_lm", "beta_wm"):
        v = getattr(state, name)
        rep._record("probability_vectors", bool((v >= 0).all() and abs(v.sum() - 1) <= 1e-9),
                    f"{name} is not a probability vector")
    for name in ("pi_lm", "pi_wm"):
        m = getattr(state, name)
        bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1) > 1e-9)
        rep._record("row_stochastic", bad.size == 0 and bool((m >= 0).all()),
                    f"{name} rows {bad.tolist()} do not sum to 1")

    rates = state.duration_rates
    rep._record("positive_rates", bool(np.all(np.isfinite(rates)) and (rates > 0).all()),
                "duration rates must be positive")

    covs = list(state.emission_covs) + list(state.prosody_covs)
    rep._record("spd_covariances", all(_is_spd(c) for c in covs),
                "a covariance is not symmetric positive-definite")

    for i, w in enumerate(state.words):
        ok = len(w) >= 1 and len(w) <= hp.max_word_length and all(0 <= l < K for l in w)
        rep._record("words", ok, f"word {i} = {tuple(w)} is empty, too long or has bad letters")
    return rep
