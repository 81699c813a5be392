"""Flat ``key = value`` configuration files mapped onto dataclasses.

Lines starting with ``#`` and blank lines are ignored.  Values are parsed
according to the dataclass field type: ints, floats, bools
(``true/false/1/0/yes/no``), strings, and comma-separated tuples or lists.
Unknown or repeated keys are errors.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .model import Hyperparameters, NIWParams
from .prosody import F0_CHANNEL, PAUSE_CHANNEL, ProsodyConfig

import numpy as np

PROSODY_MODES = {
    "none": (),
    "pause": (PAUSE_CHANNEL,),
    "f0": (F0_CHANNEL,),
    "both": (F0_CHANNEL, PAUSE_CHANNEL),
}


class ConfigError(ValueError):
    pass


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_scalar(raw: str, typ, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {typ}")


def _parse_value(raw: str, typ, key: str):
    origin = typing.get_origin(typ)
    args = typing.get_args(typ)
    if origin is typing.Union:  # Optional[X]
        inner = [a for a in args if a is not type(None)][0]
        if raw.lower() in {"", "none"}:
            return None
        return _parse_value(raw, inner, key)
    if origin in (tuple, list):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(items) != len(args):
                raise ConfigError(f"{key}: expected {len(args)} comma-separated values")
            return tuple(_parse_scalar(s, a, key) for s, a in zip(items, args))
        elem = args[0] if args else str
        vals = [_parse_scalar(s, elem, key) for s in items]
        return tuple(vals) if origin is tuple else vals
    return _parse_scalar(raw, typ, key)


def parse_pairs(text: str, source: str = "<config>") -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def build(cls, pairs: dict, source: str = "<config>"):
    """Instantiate dataclass ``cls`` from string pairs; unknown keys are errors."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(pairs) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    kwargs = {k: _parse_value(v, hints[k], k) for k, v in pairs.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load(cls, path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build(cls, parse_pairs(text, str(path)), str(path))


def dump(obj) -> str:
    """Inverse of :func:`load` for flat dataclasses."""
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, (tuple, list)):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif v is None:
            v = "none"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


@dataclass
class RunConfig:
    """Everything a train/eval/extract run needs, as flat fields."""

    data_dir: str = "data"
    output_dir: str = "runs"
    labels_dir: Optional[str] = None
    audio_dir: Optional[str] = None
    modes: List[str] = field(default_factory=lambda: ["both"])
    n_sweeps: int = 100
    n_trials: int = 20
    seed: int = 0
    checkpoint_every: int = 10
    workers: int = 1
    # sampler hyperparameters
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
    fresh_words: int = 1
    word_length_mean: Optional[float] = None
    emission_mu0: float = 0.0
    emission_kappa0: float = 0.01
    emission_sigma0: float = 1.0
    # nu0 = dimension + offset, separately for each distribution's dimension
    nu0_offset: float = 2.0
    prosody_interior_mu0: float = 0.0
    prosody_interior_kappa0: float = 100.0
    prosody_boundary_mu0: float = 1.0
    prosody_boundary_kappa0: float = 2.0
    prosody_sigma0: float = 1.0
    # feature extraction
    f0_frame_s: float = 0.01
    f0_min_hz: float = 40.0
    f0_max_hz: float = 300.0
    voicing_threshold: float = 0.6
    silence_threshold_db: float = -8.0
    silence_min_s: float = 0.01
    pause_window_s: float = 0.025
    mfcc_frame_s: float = 0.025
    mfcc_shift_s: float = 0.010
    mfcc_dim: int = 12
    n_mel_filters: int = 26
    preemphasis: float = 0.97
    use_deltas: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be at least 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be nonnegative (0 disables)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.modes:
            raise ValueError("modes must name at least one prosody mode")
        bad = [m for m in self.modes if m not in PROSODY_MODES]
        if bad:
            raise ValueError(f"unknown prosody mode(s) {bad}; choose from {sorted(PROSODY_MODES)}")
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("modes must not repeat")

    def prosody_config(self) -> ProsodyConfig:
        names = {f.name for f in dataclasses.fields(ProsodyConfig)}
        return ProsodyConfig(**{n: getattr(self, n) for n in names})

    def hyperparameters(self, spectral_dim: int, prosody_dim: int) -> Hyperparameters:
        def niw(dim, mu0, kappa0, sigma0):
            return NIWParams(np.full(dim, float(mu0)), float(kappa0),
                             float(sigma0) * np.eye(dim), dim + self.nu0_offset)

        return Hyperparameters(
            emission_niw=niw(spectral_dim, self.emission_mu0, self.emission_kappa0, self.emission_sigma0),
            prosody_niw_interior=niw(prosody_dim, self.prosody_interior_mu0,
                                     self.prosody_interior_kappa0, self.prosody_sigma0),
            prosody_niw_boundary=niw(prosody_dim, self.prosody_boundary_mu0,
                                     self.prosody_boundary_kappa0, self.prosody_sigma0),
            gamma_lm=self.gamma_lm, alpha_lm=self.alpha_lm,
            gamma_wm=self.gamma_wm, alpha_wm=self.alpha_wm,
            duration_shape=self.duration_shape, duration_rate=self.duration_rate,
            max_letters=self.max_letters, max_words=self.max_words,
            max_word_duration=self.max_word_duration, max_word_length=self.max_word_length,
            fresh_words=self.fresh_words, word_length_mean=self.word_length_mean,
        )
