"""Reference aggregators, including the original two-server LSFL round."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError
from .model_core import split_update, stack_vectors


def _stack(updates: Sequence) -> np.ndarray:
    if len(updates) == 0:
        raise InvalidInputError("no updates to aggregate")
    return stack_vectors(updates)


def fedavg(updates: Sequence) -> np.ndarray:
    """Plain coordinate-wise mean."""
    return _stack(updates).mean(axis=0)


def coord_median(updates: Sequence) -> np.ndarray:
    """Coordinate-wise median (mean of the middle pair for even counts)."""
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates: Sequence, trim_frac: float) -> np.ndarray:
    """Per coordinate, drop ``floor(trim_frac * n)`` values from each tail and average."""
    X = _stack(updates)
    n = X.shape[0]
    if not 0 <= trim_frac < 0.5:
        raise InvalidInputError(f"trim_frac must be in [0, 0.5), got {trim_frac}")
    cut = math.floor(round(trim_frac * n, 9))
    if n - 2 * cut < 1:
        raise InvalidInputError(f"trimming {cut} from each end of {n} leaves nothing")
    X = np.sort(X, axis=0)
    return X[cut:n - cut].mean(axis=0)


def krum_scores(updates: Sequence, f: int) -> np.ndarray:
    """Sum of squared distances from each update to its ``n - f - 2`` nearest others."""
    X = _stack(updates)
    n = X.shape[0]
    if n < 2 * f + 3:
        raise InvalidInputError(f"Krum needs n >= 2f + 3, got n={n}, f={f}")
    sq = (X * X).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    scores = np.empty(n)
    for i in range(n):
        others = np.sort(np.delete(d2[i], i))
        scores[i] = others[: n - f - 2].sum()
    return scores


def krum_index(updates: Sequence, f: int) -> int:
    scores = krum_scores(updates, f)
    return int(np.argmin(scores))  # argmin returns the first index on ties


def krum(updates: Sequence, f: int) -> np.ndarray:
    """The single update with the smallest Krum score."""
    return np.asarray(updates[krum_index(updates, f)], dtype=np.float64).copy()


class LsflRound(NamedTuple):
    """Outputs of one LSFL round.

    ``global_model`` and ``d_report`` are what the protocol produces;
    ``tp_shares``/``sp_shares`` are what each server received, kept so the
    collusion attack can be replayed and checked.
    """

    global_model: np.ndarray
    d_report: list
    tp_shares: list
    sp_shares: list


def lsfl_round(updates: Sequence, noise_std: float, rng: np.random.Generator) -> LsflRound:
    """Original LSFL aggregation with its per-participant SP report.

    Participants send ``w + e`` to TP and ``w - e`` to SP. TP forwards its
    total ``z1``; SP forms ``wbar = (z1 + z2) / 2N`` and reports
    ``d_i = share2_i / 2 - wbar`` for every participant back to TP.
    """
    X = _stack(updates)
    n = X.shape[0]
    pairs = [split_update(w, noise_std, rng) for w in X]
    tp = [p.share1 for p in pairs]
    sp = [p.share2 for p in pairs]
    z1 = np.sum(tp, axis=0)
    z2 = np.sum(sp, axis=0)
    wbar = (z1 + z2) / (2.0 * n)
    report = [0.5 * s - wbar for s in sp]
    return LsflRound(global_model=wbar, d_report=report, tp_shares=tp, sp_shares=sp)
