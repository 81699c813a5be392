"""On-disk formats: feature files, label files and checkpoints.

Feature file (``.feat``), little-endian::

    offset  type       field
    0       8 bytes    magic b"PHLMFEAT"
    8       uint32     format version (1)
    12      uint32     frame count T
    16      uint32     spectral dimension
    20      uint32     prosody dimension
    24      float64    frame shift in seconds
    32      float32    spectral matrix, T x spectral dim, row-major
    ...     float32    prosody matrix, T x prosody dim, row-major

Label file (``.lab``): one line per frame with whitespace-separated integers
``letter word`` and optionally a third ``boundary`` flag (1 on word-final
frames).

Checkpoint (``.ckpt``): an uncompressed zip of ``.npy`` members written with a
fixed timestamp so identical states give identical bytes.  Float members are
``<f8`` and integer members ``<i8``.  Members:

    format_version          int, currently 1
    beta_lm, pi_lm          word base weights (N,), bigram matrix (N, N)
    beta_wm, pi_wm          letter base weights (K,), bigram matrix (K, K)
    word_lengths            (N,) letters per dictionary word
    word_letters            concatenated letter indices of all words
    emission_means          (K, D)
    emission_covs           (K, D, D)
    duration_rates          (K,)
    prosody_means           (2, P), row 0 interior, row 1 word-final
    prosody_covs            (2, P, P)

Training checkpoints add ``sweep_index``, ``rng_seed``, ``trace`` (rows of
sweep, log joint, letter ARI, word ARI, wall ms) and the segmentations as
``seg_counts`` (words per sequence), ``seg_word_labels``,
``seg_word_durations``, ``seg_letter_durations`` (concatenated, one entry per
letter of each word token).
"""
from __future__ import annotations

import io
import struct
import zipfile
from pathlib import Path

import numpy as np

from .model import ModelState, ObservationSequence, Segmentation, letter_labels_from

FEATURE_MAGIC = b"PHLMFEAT"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<8sIIIId")
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


# ------------------------------------------------------------- feature files

def write_features(path, seq: ObservationSequence, frame_shift: float = 0.01):
    spectral = np.ascontiguousarray(seq.spectral, dtype="<f4")
    prosody = np.ascontiguousarray(seq.prosody, dtype="<f4")
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, seq.T, spectral.shape[1],
                          prosody.shape[1], float(frame_shift))
    Path(path).write_bytes(header + spectral.tobytes() + prosody.tobytes())


def read_features(path):
    """Return ``(ObservationSequence, frame_shift)``; the id is the file stem."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, T, dy, dp, shift = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature file")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * T * (dy + dp)
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    spectral = body[:T * dy].reshape(T, dy)
    prosody = body[T * dy:].reshape(T, dp)
    return ObservationSequence(spectral.astype(np.float64), prosody.astype(np.float64),
                               Path(path).stem), shift


def write_labels(path, letters, words, boundaries=None):
    cols = [np.asarray(letters, dtype=np.int64), np.asarray(words, dtype=np.int64)]
    if boundaries is not None:
        cols.append(np.asarray(boundaries, dtype=np.int64))
    lines = [" ".join(str(int(v)) for v in row) for row in zip(*cols)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels(path):
    """Return ``(letters, words, boundaries_or_None)``."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows:
        raise FormatError(f"{path}: empty label file")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise FormatError(f"{path}: every line needs 2 or 3 integer columns")
    arr = np.array(rows, dtype=np.int64)
    if (arr < 0).any():
        raise FormatError(f"{path}: labels must be nonnegative")
    return arr[:, 0], arr[:, 1], (arr[:, 2] if arr.shape[1] == 3 else None)


# -------------------------------------------------------------- checkpoints

def _write_archive(path, members: dict):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(members):
            arr_buf = io.BytesIO()
            np.lib.format.write_array(arr_buf, np.asarray(members[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, arr_buf.getvalue())
    Path(path).write_bytes(buf.getvalue())


def _read_archive(path) -> dict:
    out = {}
    try:
        with zipfile.ZipFile(path) as zf:
            for name in zf.namelist():
                with zf.open(name) as fh:
                    out[name[:-4]] = np.lib.format.read_array(io.BytesIO(fh.read()),
                                                              allow_pickle=False)
    except (zipfile.BadZipFile, ValueError, EOFError) as exc:
        raise FormatError(f"{path}: not a readable checkpoint ({exc})") from None
    return out


def _model_members(state: ModelState) -> dict:
    f = lambda a: np.ascontiguousarray(a, dtype="<f8")
    lengths = np.array([len(w) for w in state.words], dtype="<i8")
    letters = np.array([l for w in state.words for l in w], dtype="<i8")
    return {
        "format_version": np.array(CHECKPOINT_VERSION, dtype="<i8"),
        "beta_lm": f(state.beta_lm), "pi_lm": f(state.pi_lm),
        "beta_wm": f(state.beta_wm), "pi_wm": f(state.pi_wm),
        "word_lengths": lengths, "word_letters": letters,
        "emission_means": f(state.emission_means), "emission_covs": f(state.emission_covs),
        "duration_rates": f(state.duration_rates),
        "prosody_means": f(state.prosody_means), "prosody_covs": f(state.prosody_covs),
    }


def _model_from(m: dict) -> ModelState:
    version = int(m.get("format_version", -1))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    bounds = np.concatenate([[0], np.cumsum(m["word_lengths"])])
    words = [tuple(int(x) for x in m["word_letters"][a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    return ModelState(m["beta_lm"], m["pi_lm"], m["beta_wm"], m["pi_wm"], words,
                      m["emission_means"], m["emission_covs"], m["duration_rates"],
                      m["prosody_means"], m["prosody_covs"])


def save_model(path, state: ModelState):
    _write_archive(path, _model_members(state))


def load_model(path) -> ModelState:
    return _model_from(_read_archive(path))


def save_train_state(path, ts):
    members = _model_members(ts.model)
    segs = ts.segmentations
    members["sweep_index"] = np.array(ts.sweep_index, dtype="<i8")
    members["rng_seed"] = np.array(ts.rng_seed, dtype="<i8")
    members["trace"] = np.array([[e.sweep, e.log_joint, e.letter_ari, e.word_ari, e.wall_ms]
                                 for e in ts.trace], dtype="<f8").reshape(-1, 5)
    members["seg_counts"] = np.array([g.word_labels.size for g in segs], dtype="<i8")
    members["seg_word_labels"] = np.concatenate([g.word_labels for g in segs]).astype("<i8")
    members["seg_word_durations"] = np.concatenate([g.word_durations for g in segs]).astype("<i8")
    members["seg_letter_durations"] = np.concatenate(
        [d for g in segs for d in g.letter_durations]).astype("<i8")
    _write_archive(path, members)


def load_train_state(path):
    from .gibbs import TraceEntry, TrainState

    m = _read_archive(path)
    model = _model_from(m)
    z_all, d_all = m["seg_word_labels"], m["seg_word_durations"]
    letter_all = m["seg_letter_durations"]
    segs, zi, li = [], 0, 0
    for count in m["seg_counts"]:
        z = z_all[zi:zi + count]
        d = d_all[zi:zi + count]
        zi += count
        letter_durs = []
        for word in z:
            L = len(model.words[word])
            letter_durs.append(letter_all[li:li + L])
            li += L
        segs.append(Segmentation(z, d, letter_labels_from(model.words, z, letter_durs), letter_durs))
    trace = [TraceEntry(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]))
             for r in m["trace"]]
    return TrainState(model, segs, int(m["sweep_index"]), int(m["rng_seed"]), trace)
