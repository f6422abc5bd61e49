"""Group-based Byzantine scoring.

TP assigns participants to overlapping groups (the participant combination
matrix, PCM). SP scores each group by how far its mean lies from the global
mean, writes those distances into the participant rows (the contributed
participant group matrix, CPG), and TP keeps the ``k`` participants whose
row sums sit closest to the median row sum.

Column 0 of a PCM is the special all-participants group ``G1``; it takes part
in the share-sum exchange but is left out of the CPG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError
from .model_core import l2_dist_sq, stack_vectors

DEFAULT_GROUP_SIZE = 3

_MAX_GATE_DRAWS = 1000


@dataclass(frozen=True)
class Pcm:
    """Binary ``N x m`` participant-to-group membership matrix."""

    membership: np.ndarray
    group_size: int

    def __post_init__(self):
        mem = np.asarray(self.membership)
        if mem.ndim != 2 or mem.shape[1] < 1:
            raise ShapeError(f"PCM must be a 2-D N x m matrix, got {mem.shape}")
        if not np.isin(mem, (0, 1)).all():
            raise InvalidInputError("PCM entries must be 0 or 1")
        object.__setattr__(self, "membership", mem.astype(np.int8))

    @property
    def n_participants(self) -> int:
        return self.membership.shape[0]

    @property
    def n_groups(self) -> int:
        return self.membership.shape[1]

    def group_sizes(self) -> np.ndarray:
        return self.membership.sum(axis=0).astype(int)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.membership[:, j])

    def check_invariants(self) -> list[str]:
        """Return a list of violated invariants (empty when valid)."""
        problems = []
        mem = self.membership
        if not (mem[:, 0] == 1).all():
            problems.append("G1 column is not all ones")
        bad = [j for j in range(1, self.n_groups) if mem[:, j].sum() != self.group_size]
        if bad:
            problems.append(f"groups {bad} do not have {self.group_size} members")
        if self.n_groups > 1:
            uncovered = np.flatnonzero(mem[:, 1:].sum(axis=1) == 0)
            if uncovered.size:
                problems.append(f"participants {uncovered.tolist()} are in no proper group")
        return problems


@dataclass(frozen=True)
class Cpg:
    """Distance-filled membership matrix with G1 dropped, plus row sums."""

    entries: np.ndarray
    row_sums: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    """Deviation scores and the chosen participants (0-based positions).

    ``selected`` is ordered by ascending score, ties by ascending position.
    """

    scores: np.ndarray
    median: float
    selected: tuple[int, ...]
    row_sums: np.ndarray = field(default=None, repr=False)


def group_count(byz_pct: float) -> int:
    """Number of groups (G1 included) for a given malicious percentage.

    Percentage reading of the group-count rule: ``floor((100 - pct)/10) - 1``,
    never fewer than 2 so at least one proper group exists. 20% gives 7.
    """
    if not 0 <= byz_pct < 100:
        raise InvalidInputError(f"byz_pct must be in [0, 100), got {byz_pct}")
    # round away fp noise such as 100 - 30.000000000000004
    m = math.floor(round((100.0 - byz_pct) / 10.0, 9)) - 1
    return max(m, 2)


def choose_k(n: int, beta: float) -> int:
    """Aggregation threshold ``floor((1 - beta) * n)``, at least 1."""
    if not 0 <= beta < 0.5:
        raise InvalidInputError(f"beta must be in [0, 0.5), got {beta}")
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    return max(1, math.floor(round((1.0 - beta) * n, 9)))


def plan_groups(n: int, byz_pct: float, group_size: int = DEFAULT_GROUP_SIZE,
                n_groups: int | None = None) -> int:
    """Group count actually used for ``n`` participants.

    Starts from ``n_groups`` (or :func:`group_count`), grows it until the proper
    groups can cover everyone, and keeps it below ``n`` so the group-sum system
    stays underdetermined.
    """
    m = group_count(byz_pct) if n_groups is None else int(n_groups)
    if n_groups is None:
        m = max(m, math.ceil(n / group_size) + 1)
        m = min(m, n - 1)
    m = max(m, 2)
    return m


def _draw_pcm(n: int, m: int, group_size: int, rng: np.random.Generator) -> np.ndarray:
    mem = np.zeros((n, m), dtype=np.int8)
    mem[:, 0] = 1
    for j in range(1, m):
        mem[rng.choice(n, size=group_size, replace=False), j] = 1
    # repair: move a multiply-covered member of some group onto each uncovered row
    for i in range(n):
        if mem[i, 1:].any():
            continue
        counts = mem[:, 1:].sum(axis=1)
        candidates = [j for j in range(1, m) if (counts[mem[:, j] == 1] >= 2).any()]
        j = candidates[rng.integers(len(candidates))]
        donors = np.flatnonzero((mem[:, j] == 1) & (counts >= 2))
        donor = donors[rng.integers(donors.size)]
        mem[donor, j] = 0
        mem[i, j] = 1
    return mem


def build_pcm(n: int, m: int, group_size: int, rng: np.random.Generator) -> Pcm:
    """Randomly assign ``n`` participants to ``m - 1`` groups of ``group_size``.

    Columns are sampled independently, then any participant left out of every
    proper group is swapped in for a member that is covered elsewhere. Draws
    whose membership matrix has full column rank (every share recoverable from
    group sums) are rejected and redrawn.

    Raises:
        InvalidInputError: if the sizes are out of range or coverage is
            impossible, i.e. ``(m - 1) * group_size < n``.
    """
    if m < 2:
        raise InvalidInputError(f"need at least 2 groups, got m={m}")
    if not 1 <= group_size <= n:
        raise InvalidInputError(f"group_size must be in [1, n={n}], got {group_size}")
    if (m - 1) * group_size < n:
        raise InvalidInputError(
            f"{m - 1} groups of {group_size} cannot cover {n} participants")
    for _ in range(_MAX_GATE_DRAWS):
        mem = _draw_pcm(n, m, group_size, rng)
        if m < n or np.linalg.matrix_rank(mem.astype(float)) < n:
            return Pcm(mem, group_size)
    raise InvalidInputError(
        f"could not draw a PCM with rank < {n} for m={m}, group_size={group_size}")


def group_share_sums(pcm: Pcm, shares: Sequence) -> list[np.ndarray]:
    """Sum one server's shares over every group (G1 first)."""
    if len(shares) != pcm.n_participants:
        raise ShapeError(f"expected {pcm.n_participants} shares, got {len(shares)}")
    stacked = stack_vectors(shares)
    sums = pcm.membership.T.astype(np.float64) @ stacked
    return [row for row in sums]


def group_distances(global_mean, group_sums1: Sequence, group_sums2: Sequence,
                    group_sizes: Sequence[int]) -> list[float]:
    """Squared distance from the global mean to each group's mean.

    The group mean is rebuilt from both share sums:
    ``(sum1 + sum2) / (2 * |G|)``.
    """
    if not (len(group_sums1) == len(group_sums2) == len(group_sizes)):
        raise ShapeError("group sums and sizes must be aligned")
    out = []
    for s1, s2, size in zip(group_sums1, group_sums2, group_sizes):
        if size <= 0:
            raise InvalidInputError("group size must be positive")
        group_mean = (np.asarray(s1) + np.asarray(s2)) / (2.0 * size)
        out.append(l2_dist_sq(global_mean, group_mean))
    return out


def build_cpg(pcm: Pcm, dists: Sequence[float]) -> Cpg:
    """Fill each proper-group membership cell with that group's distance."""
    dists = np.asarray(dists, dtype=np.float64)
    if dists.shape != (pcm.n_groups,):
        raise ShapeError(f"expected {pcm.n_groups} distances, got {dists.shape}")
    entries = pcm.membership[:, 1:] * dists[1:]
    return Cpg(entries=entries, row_sums=entries.sum(axis=1))


def select_participants(cpg: Cpg, k: int) -> SelectionResult:
    """Keep the ``k`` participants whose row sum is nearest the median."""
    row_sums = np.asarray(cpg.row_sums, dtype=np.float64)
    n = row_sums.size
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    median = float(np.median(row_sums))
    scores = np.abs(row_sums - median)
    order = np.argsort(scores, kind="stable")
    return SelectionResult(scores=scores, median=median,
                           selected=tuple(int(i) for i in order[:k]), row_sums=row_sums)
