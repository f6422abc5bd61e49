"""Executable security checks.

Two sides of the same question: can a server recover individual updates
from what it sees?

* LSFL: yes. One colluding participant who hands TP its SP-share turns SP's
  per-participant report into every other participant's SP-share.
* DSFL: TP only ever sees group sums, and the group-sum system has a
  non-trivial nullspace, so infinitely many share assignments fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError
from .grouping import Pcm
from .model_core import stack_vectors

PIVOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# LSFL collusion attack
# ---------------------------------------------------------------------------


def recover_share(d_target, d_colluder, colluder_share2) -> np.ndarray:
    """``share2_i = 2 (d_i - d_c) + share2_c``."""
    d_target = np.asarray(d_target, dtype=np.float64)
    d_colluder = np.asarray(d_colluder, dtype=np.float64)
    colluder_share2 = np.asarray(colluder_share2, dtype=np.float64)
    if not d_target.shape == d_colluder.shape == colluder_share2.shape:
        raise ShapeError("report vectors and share must have the same dimension")
    return 2.0 * (d_target - d_colluder) + colluder_share2


def lsfl_reconstruct(d_report: Sequence, colluder_share2, colluder_index: int) -> list[np.ndarray]:
    """SP-shares of every participant except the colluder, in index order."""
    n = len(d_report)
    if not 0 <= colluder_index < n:
        raise InvalidInputError(f"colluder_index {colluder_index} out of range for {n}")
    d_c = d_report[colluder_index]
    return [recover_share(d_report[i], d_c, colluder_share2)
            for i in range(n) if i != colluder_index]


def lsfl_recover_updates(d_report: Sequence, tp_shares: Sequence, colluder_share2,
                         colluder_index: int) -> list[np.ndarray]:
    """Full updates ``(share1 + share2) / 2`` of every non-colluder."""
    share2 = lsfl_reconstruct(d_report, colluder_share2, colluder_index)
    others = [i for i in range(len(d_report)) if i != colluder_index]
    return [0.5 * (np.asarray(tp_shares[i]) + s2) for i, s2 in zip(others, share2)]


# ---------------------------------------------------------------------------
# group-sum recoverability
# ---------------------------------------------------------------------------


def row_reduce(M, tol: float = PIVOT_TOL) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form with partial pivoting; returns (R, pivot columns)."""
    R = np.array(M, dtype=np.float64, copy=True)
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) <= tol:
            R[r:, c] = 0.0
            continue
        R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, c], R[r])
        pivots.append(c)
        r += 1
    return R, pivots


def _system_matrix(pcm: Pcm) -> np.ndarray:
    # one equation per group, one unknown per participant
    return pcm.membership.T.astype(np.float64)


def pcm_rank(pcm: Pcm) -> tuple[int, int]:
    """Rank of the group-sum system and the dimension of its nullspace."""
    _, pivots = row_reduce(_system_matrix(pcm))
    rank = len(pivots)
    return rank, pcm.n_participants - rank


def nullspace_basis(M, tol: float = PIVOT_TOL) -> np.ndarray:
    """Columns spanning ``{x : M x = 0}``, read off the RREF."""
    R, pivots = row_reduce(M, tol)
    n = R.shape[1]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((n, len(free)))
    for j, f in enumerate(free):
        basis[f, j] = 1.0
        for row, p in enumerate(pivots):
            basis[p, j] = -R[row, f]
    return basis


@dataclass(frozen=True)
class AuditVerdict:
    """``kind`` is ``"ambiguous"`` or ``"unique"``.

    For ``unique`` the recovered shares are in ``recovered``; for
    ``ambiguous`` ``witness`` holds two different share matrices that both
    reproduce every group sum.
    """

    kind: str
    rank: int
    nullspace_dim: int
    recovered: np.ndarray | None = None
    witness: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def is_ambiguous(self) -> bool:
        return self.kind == "ambiguous"


def recovery_audit(pcm: Pcm, group_sums: Sequence) -> AuditVerdict:
    """Try to solve for individual shares from a server's group sums."""
    M = _system_matrix(pcm)
    S = stack_vectors(group_sums)
    if S.shape[0] != pcm.n_groups:
        raise ShapeError(f"expected {pcm.n_groups} group sums, got {S.shape[0]}")
    rank, null_dim = pcm_rank(pcm)
    X0, *_ = np.linalg.lstsq(M, S, rcond=None)
    if null_dim == 0:
        return AuditVerdict("unique", rank, 0, recovered=X0)
    v = nullspace_basis(M)[:, 0]
    v = v / np.max(np.abs(v))
    # shift along the nullspace by a unit in every coordinate
    X1 = X0 + np.outer(v, np.ones(S.shape[1]))
    return AuditVerdict("ambiguous", rank, null_dim, witness=(X0, X1))


def witness_is_valid(pcm: Pcm, group_sums: Sequence, verdict: AuditVerdict,
                     atol: float = 1e-9, min_gap: float = 1e-3) -> bool:
    """Both witness assignments reproduce the sums and differ by >= ``min_gap``."""
    if verdict.witness is None:
        return False
    M = _system_matrix(pcm)
    S = stack_vectors(group_sums)
    a, b = verdict.witness
    scale = 1.0 + np.max(np.abs(S))
    fits = all(np.max(np.abs(M @ X - S)) <= atol * scale for X in (a, b))
    return fits and float(np.max(np.abs(a - b))) >= min_gap
