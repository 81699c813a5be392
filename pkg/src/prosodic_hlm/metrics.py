"""Clustering and segmentation scores."""
from __future__ import annotations

import numpy as np


def _pairs(counts) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.asarray(counts).ravel())


def adjusted_rand_index(truth, predicted) -> float:
    """Pair-counting ARI between two frame labelings.

    Pair counts are exact integers and the ratio is formed with a single
    division, so hand-computable cases come out exact.  Two labelings that
    both put every frame in one cluster score 1.0.
    """
    truth = np.asarray(truth).ravel()
    predicted = np.asarray(predicted).ravel()
    if truth.size != predicted.size:
        raise ValueError(f"label lengths differ: {truth.size} vs {predicted.size}")
    if truth.size == 0:
        raise ValueError("labels are empty")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(predicted, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    index = _pairs(table)
    a = _pairs(table.sum(axis=1))
    b = _pairs(table.sum(axis=0))
    total = _pairs([truth.size])
    # (index - a b / total) / ((a + b) / 2 - a b / total), scaled by 2 total
    num = 2 * (total * index - a * b)
    den = total * (a + b) - 2 * a * b
    if den == 0:
        return 1.0
    return num / den


def boundary_prf(truth_boundaries, predicted_boundaries, tolerance: int = 0):
    """Precision, recall and F1 of boundary frames.

    Each truth boundary (in increasing order) claims the nearest unclaimed
    predicted boundary within ``tolerance`` frames.  Undefined ratios are
    reported as 0.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    truth = sorted(set(int(x) for x in truth_boundaries))
    pred = sorted(set(int(x) for x in predicted_boundaries))
    free = set(pred)
    hits = 0
    for b in truth:
        best = None
        for p in range(b - tolerance, b + tolerance + 1):
            if p in free and (best is None or abs(p - b) < abs(best - b)):
                best = p
        if best is not None:
            free.discard(best)
            hits += 1
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(truth) if truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def corpus_scores(truth_letters, truth_words, pred_letters, pred_words,
                  truth_flags=None, pred_flags=None, tolerance: int = 2) -> dict:
    """Letter/word ARI over the concatenated corpus plus per-utterance means.

    Boundary P/R/F1 uses the given per-frame word-end flags, or label changes
    when flags are missing.
    """
    tl = np.concatenate(truth_letters)
    tw = np.concatenate(truth_words)
    pl = np.concatenate(pred_letters)
    pw = np.concatenate(pred_words)
    if truth_flags is None:
        truth_flags = [_flags_from_labels(w) for w in truth_words]
    if pred_flags is None:
        pred_flags = [_flags_from_labels(w) for w in pred_words]
    p, r, f = boundary_prf(np.flatnonzero(np.concatenate(truth_flags)),
                           np.flatnonzero(np.concatenate(pred_flags)), tolerance)
    return {
        "letter_ari": adjusted_rand_index(tl, pl),
        "word_ari": adjusted_rand_index(tw, pw),
        "boundary_p": p,
        "boundary_r": r,
        "boundary_f1": f,
        "letter_ari_utt": float(np.mean([adjusted_rand_index(a, b)
                                         for a, b in zip(truth_letters, pred_letters)])),
        "word_ari_utt": float(np.mean([adjusted_rand_index(a, b)
                                       for a, b in zip(truth_words, pred_words)])),
    }


def _flags_from_labels(frame_labels) -> np.ndarray:
    flags = np.zeros(len(frame_labels), dtype=np.int8)
    flags[boundaries_from_labels(frame_labels)] = 1
    return flags


def boundaries_from_labels(frame_labels) -> np.ndarray:
    """Final frames of runs of equal labels (the last frame always ends a run)."""
    x = np.asarray(frame_labels)
    if x.size == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(x[1:] != x[:-1])
    return np.concatenate([change, [x.size - 1]])
