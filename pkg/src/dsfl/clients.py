"""Participant behaviour: honest local SGD and the Byzantine variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .tasks import Shard, Task, loss_and_grad

ADVERSARY_KINDS = ("honest", "inversion", "free_rider", "label_flip")


def cyclic_flip_map(n_classes: int) -> dict[int, int]:
    """``y -> (y + 1) mod C``; for two classes this swaps 0 and 1."""
    if n_classes < 2:
        raise InvalidInputError("need at least two classes to flip labels")
    return {c: (c + 1) % n_classes for c in range(n_classes)}


@dataclass(frozen=True)
class AdversarySpec:
    """Which participants misbehave and how.

    ``q`` is the inversion multiplier (must be negative), ``noise_std`` the
    free-rider's Gaussian scale, ``flip_map`` the label permutation for
    ``label_flip`` (defaults to :func:`cyclic_flip_map` at use).
    """

    kind: str = "honest"
    member_ids: frozenset = field(default_factory=frozenset)
    q: float = -1.0
    noise_std: float = 1.0
    flip_map: dict | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise InvalidInputError(f"unknown adversary kind {self.kind!r}")
        object.__setattr__(self, "member_ids", frozenset(int(i) for i in self.member_ids))
        if self.kind == "inversion" and not self.q < 0:
            raise InvalidInputError(f"inversion needs q < 0, got {self.q}")
        if self.kind == "free_rider" and not self.noise_std >= 0:
            raise InvalidInputError(f"free-rider noise_std must be >= 0, got {self.noise_std}")
        if self.flip_map is not None:
            _check_flip_map(self.flip_map)

    def is_adversary(self, pid: int) -> bool:
        return self.kind != "honest" and pid in self.member_ids


def _check_flip_map(flip_map: dict) -> None:
    keys = set(flip_map)
    if set(flip_map.values()) != keys:
        raise InvalidInputError("flip_map must be a permutation of its label set")
    fixed = [k for k, v in flip_map.items() if k == v]
    if fixed:
        raise InvalidInputError(f"flip_map has fixed points {fixed}")


def local_train(task: Task, shard, w0, epochs: int, batch_size: int, lr: float,
                rng: np.random.Generator) -> np.ndarray:
    """Mini-batch SGD from ``w0`` on one shard; returns the trained model.

    Each epoch visits the shard once in a fresh random order.
    """
    if lr < 0 or epochs < 1 or batch_size < 1:
        raise InvalidInputError("need lr >= 0, epochs >= 1 and batch_size >= 1")
    if not isinstance(shard, Shard):
        shard = task.shards[shard]
    n = len(shard)
    if n == 0:
        raise InvalidInputError("cannot train on an empty shard")
    w = np.array(w0, dtype=np.float64, copy=True)
    if lr == 0:
        return w
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            _, g = loss_and_grad(task, shard, w, order[start:start + batch_size])
            w -= lr * g
    return w


def corrupt_update(w_honest, spec: AdversarySpec, rng: np.random.Generator) -> np.ndarray:
    """Turn an honestly trained model into what the adversary submits.

    Label flipping acts on the training data, so it passes the model through.
    """
    w = np.asarray(w_honest, dtype=np.float64)
    if spec.kind == "inversion":
        return spec.q * w
    if spec.kind == "free_rider":
        return rng.normal(0.0, spec.noise_std, size=w.shape)
    if spec.kind == "label_flip":
        return w.copy()
    raise InvalidInputError("corrupt_update called for an honest participant")


def flip_labels(shard: Shard, flip_map: dict) -> Shard:
    """Relabel every example through ``flip_map``; features are shared."""
    labels = np.asarray(shard.y)
    unknown = set(np.unique(labels).tolist()) - set(flip_map)
    if unknown:
        raise InvalidInputError(f"labels {sorted(unknown)} not in flip_map")
    lookup = np.vectorize(flip_map.__getitem__, otypes=[labels.dtype])
    new_y = lookup(labels) if labels.size else labels.copy()
    return Shard(shard.X, new_y)
