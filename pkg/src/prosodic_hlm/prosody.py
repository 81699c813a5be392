"""Spectral and prosodic features from audio.

All channels share one frame grid: frame ``k`` covers
``[k * shift, (k + 1) * shift)`` seconds and analysis windows are centred on
that interval.  Prosody channel 0 is the second difference of F0, channel 1
the duration of the silent pause that follows the frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.io import wavfile

from .model import ObservationSequence

F0_CHANNEL = 0
PAUSE_CHANNEL = 1


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("audio must be a nonempty mono signal")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.isfinite(x).all():
            raise ValueError("audio contains NaN or Inf")
        object.__setattr__(self, "samples", x)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ProsodyConfig:
    f0_frame_s: float = 0.01
    f0_min_hz: float = 40.0
    f0_max_hz: float = 300.0
    # normalised autocorrelation needed to call a frame voiced
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
        if not 0 < self.f0_min_hz < self.f0_max_hz:
            raise ValueError("need 0 < f0_min_hz < f0_max_hz")
        if not self.silence_threshold_db < 0:
            raise ValueError("silence_threshold_db must be negative")
        for name in ("f0_frame_s", "silence_min_s", "pause_window_s", "mfcc_frame_s", "mfcc_shift_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must lie in (0, 1)")
        if self.mfcc_dim < 1 or self.mfcc_dim >= self.n_mel_filters:
            raise ValueError("need 1 <= mfcc_dim < n_mel_filters")
        if not 0 <= self.preemphasis < 1:
            raise ValueError("preemphasis must lie in [0, 1)")

    @property
    def spectral_dim(self) -> int:
        return self.mfcc_dim * (3 if self.use_deltas else 1)


def read_wav(path) -> AudioBuffer:
    """PCM WAV (integer or float) to a mono buffer scaled to [-1, 1]."""
    rate, data = wavfile.read(Path(path))
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if info.min == 0:  # unsigned 8-bit
            x = (data.astype(np.float64) - 128.0) / 128.0
        else:
            x = data.astype(np.float64) / -float(info.min)
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, float(rate))


def _frames(x: np.ndarray, n_frames: int, hop: float, width: int, rate: float) -> np.ndarray:
    """``(n_frames, width)`` windows centred on ``(k + 0.5) * hop`` seconds."""
    centres = np.round((np.arange(n_frames) + 0.5) * hop * rate).astype(np.int64)
    starts = centres - width // 2
    pad = width + 1
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    idx = starts[:, None] + pad + np.arange(width)[None, :]
    return xp[idx]


def n_grid_frames(audio: AudioBuffer, hop: float) -> int:
    n = int(np.floor(audio.duration / hop + 1e-9))
    if n < 1:
        raise ValueError(f"audio of {audio.duration:.4f} s is shorter than one {hop} s frame")
    return n


def extract_f0(audio: AudioBuffer, cfg: ProsodyConfig = ProsodyConfig()) -> np.ndarray:
    """F0 in Hz per ``f0_frame_s`` frame, 0 where unvoiced.

    Normalised autocorrelation over a window of two longest periods, best lag
    refined by a parabola through its neighbours.  A strong peak at an integer
    fraction of the chosen lag means the true period is shorter than the
    allowed range, and the frame is reported unvoiced.
    """
    rate = audio.sample_rate
    n = n_grid_frames(audio, cfg.f0_frame_s)
    lag_lo = max(2, int(np.floor(rate / cfg.f0_max_hz)))
    lag_hi = int(np.ceil(rate / cfg.f0_min_hz))
    width = 2 * lag_hi
    fr = _frames(audio.samples, n, cfg.f0_frame_s, width, rate)
    fr = fr - fr.mean(axis=1, keepdims=True)
    nfft = sfft.next_fast_len(2 * width)
    spec = sfft.rfft(fr, nfft, axis=1)
    acf = sfft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :lag_hi + 2]
    cs = np.concatenate([np.zeros((n, 1)), np.cumsum(fr ** 2, axis=1)], axis=1)
    lags = np.arange(lag_hi + 2)
    head = cs[:, width - lags]                 # energy of x[0 : width - lag]
    tail = cs[:, [width]] - cs[:, lags]        # energy of x[lag : width]
    denom = np.sqrt(head * tail)
    peak_energy = cs[:, width].max()
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 1e-12 * max(peak_energy, 1e-300), acf / denom, 0.0)
    f0 = np.zeros(n)
    for k in range(n):
        if cs[k, width] <= 1e-10 * width:
            continue
        rk = r[k]
        top = rk[lag_lo:lag_hi + 1].max()
        if top < cfg.voicing_threshold:
            continue
        # shortest in-range local peak close to the best one (avoids octave errors)
        seg = rk[lag_lo - 1:lag_hi + 2]
        peaks = np.flatnonzero((seg[1:-1] >= seg[:-2]) & (seg[1:-1] >= seg[2:])
                               & (seg[1:-1] >= 0.9 * top))
        best = lag_lo + int(peaks[0]) if peaks.size else lag_lo + int(np.argmax(rk[lag_lo:lag_hi + 1]))
        # a period shorter than lag_lo shows up as a peak at best / m
        sub = False
        for m in (2, 3, 4, 5):
            q = int(round(best / m))
            if q < 2:
                break
            if q < lag_lo and rk[max(q - 1, 1):q + 2].max() > 0.9 * rk[best]:
                sub = True
                break
        if sub:
            continue
        a, b, c = rk[best - 1], rk[best], rk[best + 1]
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den < 0 else 0.0
        hz = rate / (best + shift)
        if cfg.f0_min_hz <= hz <= cfg.f0_max_hz:
            f0[k] = hz
    return f0


def second_difference(f0: np.ndarray) -> np.ndarray:
    """``f[t+1] - 2 f[t] + f[t-1]`` where all three frames are voiced, else 0."""
    f = np.asarray(f0, dtype=np.float64)
    out = np.zeros_like(f)
    if f.size < 3:
        return out
    voiced = f > 0
    ok = voiced[:-2] & voiced[1:-1] & voiced[2:]
    out[1:-1] = np.where(ok, f[2:] - 2 * f[1:-1] + f[:-2], 0.0)
    return out


def _silent_runs(audio: AudioBuffer, cfg: ProsodyConfig, hop: float):
    """``(start_frame, end_frame)`` runs of quiet frames lasting long enough."""
    n = n_grid_frames(audio, hop)
    width = max(1, int(round(cfg.pause_window_s * audio.sample_rate)))
    fr = _frames(audio.samples, n, hop, width, audio.sample_rate)
    rms = np.sqrt(np.mean(fr ** 2, axis=1))
    peak = rms.max()
    if peak <= 0:
        return [(0, n)], n
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(rms / peak)
    quiet = db < cfg.silence_threshold_db
    edges = np.diff(np.concatenate([[0], quiet.astype(np.int8), [0]]))
    starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    min_frames = cfg.silence_min_s / hop - 1e-9
    return [(int(a), int(b)) for a, b in zip(starts, ends) if b - a >= min_frames], n


def detect_pauses(audio: AudioBuffer, cfg: ProsodyConfig = ProsodyConfig()):
    """Silent pauses as ``(start_s, end_s)`` pairs on the spectral frame grid."""
    hop = cfg.mfcc_shift_s
    runs, _ = _silent_runs(audio, cfg, hop)
    return [(a * hop, b * hop) for a, b in runs]


def mel_filterbank(n_filters: int, nfft: int, rate: float) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, ``(n_filters, nfft//2+1)``."""
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    edges_hz = inv(np.linspace(0.0, mel(rate / 2.0), n_filters + 2))
    freqs = np.linspace(0.0, rate / 2.0, nfft // 2 + 1)
    lo, mid, hi = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(up, down), 0.0, None)


def deltas(feat: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over ``+-width`` frames with edge padding."""
    T = feat.shape[0]
    padded = np.pad(feat, ((width, width), (0, 0)), mode="edge")
    num = sum(n * (padded[width + n:width + n + T] - padded[width - n:width - n + T])
              for n in range(1, width + 1))
    return num / (2 * sum(n * n for n in range(1, width + 1)))


def mfcc(audio: AudioBuffer, cfg: ProsodyConfig = ProsodyConfig()) -> np.ndarray:
    """``(T, mfcc_dim)`` cepstra, or ``(T, 3 * mfcc_dim)`` with deltas."""
    rate = audio.sample_rate
    n = n_grid_frames(audio, cfg.mfcc_shift_s)
    x = audio.samples
    x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])
    width = int(round(cfg.mfcc_frame_s * rate))
    fr = _frames(x, n, cfg.mfcc_shift_s, width, rate) * np.hamming(width)
    nfft = 1 << (width - 1).bit_length()
    power = np.abs(np.fft.rfft(fr, nfft, axis=1)) ** 2 / nfft
    energies = power @ mel_filterbank(cfg.n_mel_filters, nfft, rate).T
    logmel = np.log(np.maximum(energies, np.finfo(float).tiny))
    cep = sfft.dct(logmel, type=2, norm="ortho", axis=1)[:, 1:cfg.mfcc_dim + 1]
    if cfg.use_deltas:
        d1 = deltas(cep)
        cep = np.hstack([cep, d1, deltas(d1)])
    return cep


def assemble_features(audio: AudioBuffer, cfg: ProsodyConfig = ProsodyConfig(),
                      id: str = "") -> ObservationSequence:
    """MFCC plus (second difference of F0, following pause duration), with
    pause frames removed.

    The F0 contour and its second difference are computed on the full
    timeline before pauses are cut out.  A pause at the very start has no
    preceding frame and its duration is dropped.
    """
    hop = cfg.mfcc_shift_s
    spectral = mfcc(audio, cfg)
    T = spectral.shape[0]
    ddf0 = second_difference(extract_f0(audio, cfg))
    # map the F0 grid onto the spectral grid by nearest frame centre
    src = np.clip(np.floor((np.arange(T) + 0.5) * hop / cfg.f0_frame_s).astype(np.int64),
                  0, ddf0.size - 1)
    prosody = np.zeros((T, 2))
    prosody[:, F0_CHANNEL] = ddf0[src]
    runs, _ = _silent_runs(audio, cfg, hop)
    keep = np.ones(T, dtype=bool)
    for a, b in runs:
        keep[a:b] = False
        if a > 0:
            prosody[a - 1, PAUSE_CHANNEL] += (b - a) * hop
    if not keep.any():
        raise ValueError("audio is entirely silent")
    return ObservationSequence(spectral[keep], prosody[keep], id=id)
