"""One DSFL round between participants, TP and SP, plus the training loop.

Message flow of :func:`dsfl_round` (all sizes in bytes, 8 per float)::

    P_i -> TP   share1_i                      N messages, dim*8 each
    P_i -> SP   share2_i                      N messages, dim*8 each
    TP  -> SP   group sum of share1, per G    m messages, dim*8 each
    TP  -> SP   PCM                           1 message,  N*m (one byte per cell)
    SP  -> TP   CPG                           1 message,  N*(m-1)*8
    TP  -> SP   selected indices + TP partial 1 message,  k*8 + dim*8
    SP  -> all  new global model              1 broadcast, dim*8

The G1 group sum doubles as TP's total ``z1``; SP pairs it with its own
total to form the global mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import grouping
from .clients import AdversarySpec, cyclic_flip_map, corrupt_update, flip_labels, local_train
from .errors import InvalidInputError, UnderQuorumError
from .grouping import SelectionResult
from .model_core import DEFAULT_NOISE_STD, split_update, stack_vectors
from .tasks import Task, evaluate

BYTES_PER_FLOAT = 8
BYTES_PER_INDEX = 8
BYTES_PER_PCM_CELL = 1

TP, SP, ALL = "TP", "SP", "ALL"


@dataclass(frozen=True)
class RoundConfig:
    n_participants: int = 10
    byz_fraction: float = 0.2
    noise_std: float = DEFAULT_NOISE_STD
    group_size: int = grouping.DEFAULT_GROUP_SIZE
    n_groups: int | None = None
    k: int | None = None
    credit_init: float = 10.0
    reward: float = 2.0
    penalty: float = 2.0
    cost: float = 1.0
    local_epochs: int = 1
    batch_size: int = 10
    learning_rate: float = 0.05
    lr_alpha: float | None = None
    lr_gamma: float = 1.0
    resample_adversaries: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_participants < 1:
            raise InvalidInputError("n_participants must be positive")
        if not 0 <= self.byz_fraction < 0.5:
            raise InvalidInputError("byz_fraction must be in [0, 0.5)")
        if self.noise_std < 0:
            raise InvalidInputError("noise_std must be >= 0")
        if self.group_size < 1:
            raise InvalidInputError("group_size must be positive")
        if self.k is not None and not 1 <= self.k <= self.n_participants:
            raise InvalidInputError("k must be in [1, n_participants]")
        for name in ("credit_init", "reward", "penalty", "cost"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("local_epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be >= 0")
        if self.lr_alpha is not None and (self.lr_alpha <= 0 or self.lr_gamma <= 0):
            raise InvalidInputError("lr_alpha and lr_gamma must be positive")

    @property
    def threshold(self) -> int:
        """The aggregation threshold k (explicit, or from ``byz_fraction``)."""
        if self.k is not None:
            return self.k
        return grouping.choose_k(self.n_participants, self.byz_fraction)

    def lr_at(self, t: int) -> float:
        """Step size for 1-based round ``t``."""
        if self.lr_alpha is None:
            return self.learning_rate
        return self.lr_alpha / (t + self.lr_gamma)


@dataclass(frozen=True)
class CreditLedger:
    balances: dict
    active: frozenset

    @classmethod
    def start(cls, participant_ids, credit: float) -> "CreditLedger":
        ids = [int(i) for i in participant_ids]
        return cls(balances={i: float(credit) for i in ids}, active=frozenset(ids))

    def active_ids(self) -> list[int]:
        return sorted(self.active)

    def total(self) -> float:
        return float(sum(self.balances.values()))


def credit_update(ledger: CreditLedger, selected, cfg: RoundConfig) -> CreditLedger:
    """Reward selected participants, penalise the other active ones.

    Selected: ``+reward - cost``; unselected: ``-penalty - cost``. Anyone whose
    balance drops below zero leaves the active set for good.
    """
    selected = set(int(i) for i in selected)
    stray = selected - ledger.active
    if stray:
        raise InvalidInputError(f"selected ids {sorted(stray)} are not active")
    balances = dict(ledger.balances)
    active = set(ledger.active)
    for pid in sorted(ledger.active):
        if pid in selected:
            balances[pid] += cfg.reward - cfg.cost
        else:
            balances[pid] -= cfg.penalty + cfg.cost
        if balances[pid] < 0:
            active.discard(pid)
    return CreditLedger(balances=balances, active=frozenset(active))


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    kind: str
    nbytes: int


@dataclass
class RoundTranscript:
    """Everything exchanged in one round, split by which server saw it."""

    participant_ids: list[int]
    messages: list[Message] = field(default_factory=list)
    tp_view: dict = field(default_factory=dict)
    sp_view: dict = field(default_factory=dict)
    global_model: np.ndarray | None = None

    def send(self, sender, receiver, kind, nbytes):
        self.messages.append(Message(sender, receiver, kind, int(nbytes)))

    def bytes_of(self, kind: str | None = None) -> int:
        return sum(m.nbytes for m in self.messages if kind is None or m.kind == kind)

    def count(self, kind: str | None = None) -> int:
        return sum(1 for m in self.messages if kind is None or m.kind == kind)

    @property
    def share_bytes(self) -> int:
        return self.bytes_of("share1") + self.bytes_of("share2")


def dsfl_round(cfg: RoundConfig, updates, ledger: CreditLedger, rng: np.random.Generator):
    """Run one round of masked, group-scored, credit-weighted aggregation.

    ``updates[i]`` belongs to the i-th id of ``ledger.active_ids()``. Returns
    ``(W, selection, new_ledger, transcript)`` where ``selection.selected``
    holds positions into that id list. ``W`` is the plain mean of the selected
    updates.

    Raises:
        UnderQuorumError: when fewer than ``k`` participants are active.
    """
    ids = ledger.active_ids()
    n = len(ids)
    k = cfg.threshold
    if n < k:
        raise UnderQuorumError(f"{n} active participants, need k={k}")
    if len(updates) != n:
        raise InvalidInputError(f"got {len(updates)} updates for {n} active participants")
    dim = np.asarray(updates[0]).shape[0]
    tr = RoundTranscript(participant_ids=ids)

    # participants split and upload
    pairs = [split_update(u, cfg.noise_std, rng) for u in updates]
    share1 = [p.share1 for p in pairs]
    share2 = [p.share2 for p in pairs]
    for pid in ids:
        tr.send(f"P{pid}", TP, "share1", dim * BYTES_PER_FLOAT)
    for pid in ids:
        tr.send(f"P{pid}", SP, "share2", dim * BYTES_PER_FLOAT)

    # TP groups participants and sums its shares per group
    group_size = min(cfg.group_size, n)
    m = grouping.plan_groups(n, 100.0 * cfg.byz_fraction, group_size, cfg.n_groups)
    pcm = grouping.build_pcm(n, m, group_size, rng)
    sums1 = grouping.group_share_sums(pcm, share1)
    for _ in range(m):
        tr.send(TP, SP, "group_sum", dim * BYTES_PER_FLOAT)
    tr.send(TP, SP, "pcm", n * m * BYTES_PER_PCM_CELL)

    # SP: global mean from both totals, group distances, CPG
    sums2 = grouping.group_share_sums(pcm, share2)
    global_mean = (sums1[0] + sums2[0]) / (2.0 * n)
    dists = grouping.group_distances(global_mean, sums1, sums2, pcm.group_sizes())
    cpg = grouping.build_cpg(pcm, dists)
    tr.send(SP, TP, "cpg", n * (m - 1) * BYTES_PER_FLOAT)

    # TP: median deviation, top-k, credits, partial aggregate
    selection = grouping.select_participants(cpg, k)
    chosen = sorted(selection.selected)
    new_ledger = credit_update(ledger, [ids[i] for i in chosen], cfg)
    partial1 = stack_vectors([share1[i] for i in chosen]).sum(axis=0) / (2.0 * k)
    tr.send(TP, SP, "selection", k * BYTES_PER_INDEX + dim * BYTES_PER_FLOAT)

    # SP: matching partial aggregate and the new global model
    partial2 = stack_vectors([share2[i] for i in chosen]).sum(axis=0) / (2.0 * k)
    W = partial1 + partial2
    tr.send(SP, ALL, "broadcast", dim * BYTES_PER_FLOAT)

    tr.tp_view = {
        "share1": share1,
        "pcm": pcm,
        "group_sums1": sums1,
        "cpg": cpg,
        "scores": selection.scores,
        "selected": selection.selected,
        "partial1": partial1,
    }
    tr.sp_view = {
        "share2": share2,
        "group_sums1": sums1,
        "group_sums2": sums2,
        "pcm": pcm,
        "global_mean": global_mean,
        "group_dists": dists,
        "cpg": cpg,
        "selected": selection.selected,
        "partial1": partial1,
        "partial2": partial2,
        "W": W,
    }
    tr.global_model = W
    return W, selection, new_ledger, tr


def expected_overhead(n: int, dim: int, m: int, k: int) -> dict:
    """Message and byte counts one :func:`dsfl_round` produces."""
    shares = 2 * n * dim * BYTES_PER_FLOAT
    total = (shares + m * dim * BYTES_PER_FLOAT + n * m * BYTES_PER_PCM_CELL
             + n * (m - 1) * BYTES_PER_FLOAT + k * BYTES_PER_INDEX + dim * BYTES_PER_FLOAT
             + dim * BYTES_PER_FLOAT)
    return {"messages_per_round": 2 * n + m + 4, "bytes_per_round": total,
            "shares_bytes": shares}


# ---------------------------------------------------------------------------
# view separation audit
# ---------------------------------------------------------------------------


def _iter_arrays(obj):
    if isinstance(obj, np.ndarray):
        if obj.ndim == 1:
            yield obj
        elif obj.ndim == 2:
            yield from obj
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            yield from _iter_arrays(item)
    elif isinstance(obj, dict):
        for item in obj.values():
            yield from _iter_arrays(item)
    elif hasattr(obj, "__dataclass_fields__"):
        for name in obj.__dataclass_fields__:
            yield from _iter_arrays(getattr(obj, name))


def _contains(vectors, needle) -> bool:
    return any(v.shape == needle.shape and np.array_equal(v, needle) for v in vectors)


def view_violations(tr: RoundTranscript) -> list[str]:
    """Individual shares that leaked into the other server's view.

    TP must never hold a ``share2_i``; SP must never hold a ``share1_i``
    except through the group sums it is sent.
    """
    share1 = tr.tp_view.get("share1", [])
    share2 = tr.sp_view.get("share2", [])
    problems = []
    tp_rest = [v for key, val in tr.tp_view.items() if key != "share1"
               for v in _iter_arrays(val)] + list(share1)
    for i, s in enumerate(share2):
        if _contains(tp_rest, s):
            problems.append(f"TP view holds share2 of participant {tr.participant_ids[i]}")
    sp_rest = [v for key, val in tr.sp_view.items() if key not in ("share2", "group_sums1")
               for v in _iter_arrays(val)] + list(share2)
    for i, s in enumerate(share1):
        if _contains(sp_rest, s):
            problems.append(f"SP view holds share1 of participant {tr.participant_ids[i]}")
    return problems


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    round: int
    global_model: np.ndarray
    metrics: dict
    selection: SelectionResult | None
    participant_ids: list[int]
    adversary_ids: frozenset
    ledger: CreditLedger | None = None
    transcript: RoundTranscript | None = None

    @property
    def selected_ids(self) -> list[int]:
        if self.selection is None:
            return list(self.participant_ids)
        return [self.participant_ids[i] for i in self.selection.selected]


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


_TRAIN, _ROUND, _ADV = 1, 2, 3


def participant_updates(cfg: RoundConfig, task: Task, adversary: AdversarySpec, w_global,
                        ids, t: int, adversary_ids=None, lr: float | None = None):
    """Local models for one round; adversaries corrupt theirs.

    Every participant draws from its own ``(seed, round, id)`` stream, so the
    result does not depend on evaluation order.
    """
    adversary_ids = adversary.member_ids if adversary_ids is None else adversary_ids
    lr = cfg.lr_at(t) if lr is None else lr
    flip_map = adversary.flip_map
    if adversary.kind == "label_flip" and flip_map is None:
        flip_map = cyclic_flip_map(max(task.n_classes, 2))
    out = []
    for pid in ids:
        rng = _stream(cfg.seed, _TRAIN, t, pid)
        bad = adversary.kind != "honest" and pid in adversary_ids
        shard = task.shards[pid]
        if bad and adversary.kind == "label_flip":
            shard = flip_labels(shard, flip_map)
        w = local_train(task, shard, w_global, cfg.local_epochs, cfg.batch_size, lr, rng)
        if bad:
            w = corrupt_update(w, adversary, rng)
        out.append(w)
    return out


def _resampled(cfg, adversary, ids, t):
    count = len(adversary.member_ids)
    rng = _stream(cfg.seed, _ADV, t)
    return frozenset(int(i) for i in rng.choice(ids, size=min(count, len(ids)), replace=False))


def run_training(cfg: RoundConfig, task: Task, adversary: AdversarySpec, rounds: int,
                 rng: np.random.Generator | None = None, keep_transcripts: bool = False,
                 on_round: Callable | None = None, w0=None) -> list[RoundRecord]:
    """Broadcast, train locally, corrupt, aggregate with DSFL; repeat.

    ``rng`` is only consulted when ``cfg.seed`` should be overridden; all
    per-round randomness is derived from ``cfg.seed``. ``on_round`` receives
    each :class:`RoundRecord` (with its transcript) as soon as it exists.

    Raises:
        UnderQuorumError: if credit exclusion leaves fewer than ``k`` active.
    """
    if rounds < 1:
        raise InvalidInputError("rounds must be >= 1")
    if task.n_shards < cfg.n_participants:
        raise InvalidInputError("task has fewer shards than participants")
    if rng is not None:
        cfg = replace(cfg, seed=int(rng.integers(2**63)))
    w = task.init_model() if w0 is None else np.array(w0, dtype=np.float64)
    ledger = CreditLedger.start(range(cfg.n_participants), cfg.credit_init)
    history = []
    for t in range(1, rounds + 1):
        ids = ledger.active_ids()
        bad_ids = (_resampled(cfg, adversary, ids, t) if cfg.resample_adversaries
                   else adversary.member_ids)
        updates = participant_updates(cfg, task, adversary, w, ids, t, bad_ids)
        w, selection, new_ledger, tr = dsfl_round(cfg, updates, ledger, _stream(cfg.seed, _ROUND, t))
        rec = RoundRecord(round=t, global_model=w, metrics=evaluate(task, w),
                          selection=selection, participant_ids=ids,
                          adversary_ids=frozenset(bad_ids) if adversary.kind != "honest" else frozenset(),
                          ledger=new_ledger, transcript=tr)
        if on_round is not None:
            on_round(rec)
        if not keep_transcripts:
            rec.transcript = None
        history.append(rec)
        ledger = new_ledger
    return history
