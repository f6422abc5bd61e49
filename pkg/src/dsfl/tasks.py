"""Desk-scale learning tasks with known structure.

Three kinds are built in:

``quadratic``
    Least-squares regression. The federated objective is
    ``F(w) = (1/2n) sum_j (x_j . w - y_j)^2 = 0.5 w'Aw - b'w + c`` with
    ``A = X'X/n`` and ``b = X'y/n``, so ``w* = A^-1 b`` is known exactly.
``logistic``
    Binary logistic regression (labels 0/1, bias folded into the last
    weight) with an L2 term ``lambda/2 ||w||^2``.
``tiny_digits``
    Softmax regression on procedurally drawn 8x8 seven-segment digits,
    10 classes, no download needed.

A :class:`Task` owns the training shards (one per participant), a held-out
test split, and whatever optimum information is available.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

KINDS = ("quadratic", "logistic", "tiny_digits")
DEFAULT_L2 = 1e-3


@dataclass(frozen=True)
class Shard:
    """One participant's slice of the training data."""

    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]


@dataclass
class Task:
    kind: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    shards: list[Shard]
    n_classes: int = 0
    l2_reg: float = 0.0
    w_star: np.ndarray | None = None
    f_star: float | None = None
    mu: float | None = None
    lip: float | None = None
    A: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        """Length of the flat model vector."""
        d = self.X_train.shape[1]
        return d * self.n_classes if self.kind == "tiny_digits" else d

    @property
    def n_shards(self) -> int:
        return len(self.shards)

    @property
    def is_classification(self) -> bool:
        return self.kind != "quadratic"

    def init_model(self) -> np.ndarray:
        return np.zeros(self.dim)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _softmax_logits(X, w, n_classes):
    return X @ w.reshape(X.shape[1], n_classes)


def _loss_grad(kind, X, y, w, l2, n_classes):
    n = y.shape[0]
    if kind == "quadratic":
        r = X @ w - y
        loss = 0.5 * float(r @ r) / n
        grad = X.T @ r / n
    elif kind == "logistic":
        z = X @ w
        s = 2.0 * y - 1.0
        loss = float(np.logaddexp(0.0, -s * z).mean())
        # d/dz log(1 + exp(-s z)) = -s * sigmoid(-s z)
        coef = -s * _sigmoid(-s * z)
        grad = X.T @ coef / n
    elif kind == "tiny_digits":
        logits = _softmax_logits(X, w, n_classes)
        logits = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(logits).sum(axis=1))
        loss = float((logz - logits[np.arange(n), y]).mean())
        p = np.exp(logits - logz[:, None])
        p[np.arange(n), y] -= 1.0
        grad = (X.T @ p / n).ravel()
    else:
        raise InvalidInputError(f"unknown task kind {kind!r}")
    if l2:
        loss += 0.5 * l2 * float(w @ w)
        grad = grad + l2 * w
    return loss, grad


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def loss_and_grad(task: Task, shard=None, w=None, batch=None) -> tuple[float, np.ndarray]:
    """Mean loss and its exact gradient on a batch.

    Args:
        task: the task.
        shard: a shard index, a :class:`Shard`, or ``None`` for the whole
            training set (the global objective).
        w: flat model vector.
        batch: optional row indices into the shard; ``None`` means all rows.
    """
    if shard is None:
        X, y = task.X_train, task.y_train
    elif isinstance(shard, Shard):
        X, y = shard.X, shard.y
    else:
        X, y = task.shards[shard].X, task.shards[shard].y
    if batch is not None:
        X, y = X[batch], y[batch]
    if y.shape[0] == 0:
        raise InvalidInputError("empty batch")
    w = np.asarray(w, dtype=np.float64)
    return _loss_grad(task.kind, X, y, w, task.l2_reg, task.n_classes)


def predict(task: Task, w, X=None) -> np.ndarray:
    X = task.X_test if X is None else X
    if task.kind == "logistic":
        return (X @ w > 0).astype(int)
    if task.kind == "tiny_digits":
        return np.argmax(_softmax_logits(X, w, task.n_classes), axis=1)
    raise InvalidInputError("predict() needs a classification task")


def evaluate(task: Task, w) -> dict:
    """Global training loss, held-out accuracy and squared distance to ``w*``.

    Keys that do not apply to the task are ``None``. ``excess_loss`` is
    ``F(w) - F*`` when the optimum is known.
    """
    w = np.asarray(w, dtype=np.float64)
    loss, _ = loss_and_grad(task, None, w)
    out = {"loss": loss, "accuracy": None, "dist_to_opt": None, "excess_loss": None}
    if task.is_classification:
        out["accuracy"] = float(np.mean(predict(task, w) == task.y_test))
    if task.w_star is not None:
        diff = w - task.w_star
        out["dist_to_opt"] = float(diff @ diff)
    if task.f_star is not None:
        out["excess_loss"] = loss - task.f_star
    return out


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _partition(y: np.ndarray, n_shards: int, iid: bool, rng) -> list[np.ndarray]:
    n = y.shape[0]
    if n < n_shards:
        raise InvalidInputError(f"{n} samples cannot fill {n_shards} shards")
    if iid:
        order = rng.permutation(n)
    else:
        # label-sorted contiguous blocks; shuffle first so ties are not by position
        perm = rng.permutation(n)
        order = perm[np.argsort(y[perm], kind="stable")]
    return np.array_split(order, n_shards)


def _optimum_by_newton(kind, X, y, l2, n_classes, dim, iters=50):
    w = np.zeros(dim)
    n = y.shape[0]
    for _ in range(iters):
        _, g = _loss_grad(kind, X, y, w, l2, n_classes)
        if kind == "logistic":
            p = _sigmoid(X @ w)
            H = (X.T * (p * (1 - p))) @ X / n + l2 * np.eye(dim)
            step = np.linalg.solve(H, g)
        else:
            break
        w = w - step
        if np.linalg.norm(step) < 1e-13:
            break
    return w


def task_from_data(kind: str, X, y, n_shards: int, iid: bool = True,
                   rng: np.random.Generator | None = None, test_fraction: float = 0.0,
                   l2_reg: float | None = None, X_test=None, y_test=None) -> Task:
    """Wrap user-provided arrays as a task.

    For ``logistic`` a bias column is appended; labels must be 0/1. For
    ``tiny_digits``-style softmax data pass ``kind="tiny_digits"`` with integer
    labels. Without an explicit test split, ``test_fraction`` of the rows are
    held out (or the training set doubles as test when it is 0).
    """
    if kind not in KINDS:
        raise InvalidInputError(f"kind must be one of {KINDS}, got {kind!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("X must be (n, d) with one label per row")
    if kind != "quadratic":
        y = y.astype(int)
    if X_test is None and test_fraction > 0:
        perm = rng.permutation(y.shape[0])
        n_test = int(round(test_fraction * y.shape[0]))
        X_test, y_test = X[perm[:n_test]], y[perm[:n_test]]
        X, y = X[perm[n_test:]], y[perm[n_test:]]
    elif X_test is None:
        X_test, y_test = X, y
    X_test = np.asarray(X_test, dtype=np.float64)
    y_test = np.asarray(y_test)

    if kind in ("logistic", "tiny_digits"):
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        X_test = np.hstack([X_test, np.ones((X_test.shape[0], 1))])

    n_classes = 0
    if kind == "logistic":
        if not np.isin(y, (0, 1)).all():
            raise InvalidInputError("logistic labels must be 0 or 1")
        n_classes = 2
    elif kind == "tiny_digits":
        n_classes = int(max(y.max(), y_test.max())) + 1

    idx = _partition(y, n_shards, iid, rng)
    shards = [Shard(X[i], y[i]) for i in idx]
    l2 = (0.0 if kind == "quadratic" else DEFAULT_L2) if l2_reg is None else float(l2_reg)
    task = Task(kind=kind, X_train=X, y_train=y, X_test=X_test, y_test=y_test,
                shards=shards, n_classes=n_classes, l2_reg=l2)

    n, d = X.shape
    if kind == "quadratic":
        A = X.T @ X / n + l2 * np.eye(d)
        b = X.T @ y / n
        w_star = np.linalg.solve(A, b)
        eig = np.linalg.eigvalsh(A)
        task.A, task.b = A, b
        task.w_star = w_star
        task.f_star = loss_and_grad(task, None, w_star)[0]
        task.mu, task.lip = float(eig[0]), float(eig[-1])
    elif kind == "logistic":
        task.w_star = _optimum_by_newton(kind, X, y, l2, n_classes, d)
        task.f_star = loss_and_grad(task, None, task.w_star)[0]
        task.mu = l2
        task.lip = float(np.linalg.eigvalsh(X.T @ X / n)[-1]) / 4.0 + l2
    return task


# seven-segment layout on an 8x8 canvas: segment -> list of (row, col) pixels
_SEGMENTS = {
    "a": [(1, c) for c in range(2, 6)],
    "b": [(r, 5) for r in range(1, 4)],
    "c": [(r, 5) for r in range(4, 7)],
    "d": [(6, c) for c in range(2, 6)],
    "e": [(r, 2) for r in range(4, 7)],
    "f": [(r, 2) for r in range(1, 4)],
    "g": [(3, c) for c in range(2, 6)] + [(4, c) for c in range(3, 5)],
}
_DIGIT_SEGMENTS = ["abcdef", "bc", "abged", "abgcd", "fgbc",
                   "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"]


def digit_prototypes() -> np.ndarray:
    """Noise-free ``(10, 8, 8)`` seven-segment glyphs for the digits 0-9."""
    protos = np.zeros((10, 8, 8))
    for digit, segs in enumerate(_DIGIT_SEGMENTS):
        for s in segs:
            for r, c in _SEGMENTS[s]:
                protos[digit, r, c] = 1.0
    return protos


def _tiny_digits(n: int, rng, noise: float = 0.35):
    protos = digit_prototypes()
    # balanced classes, so a label-sorted split of >= 10 shards gives each at most two digits
    y = rng.permutation(np.arange(n) % 10)
    imgs = protos[y]
    shifts = rng.integers(-1, 2, size=(n, 2))
    imgs = np.stack([np.roll(img, tuple(s), axis=(0, 1)) for img, s in zip(imgs, shifts)])
    imgs = imgs + noise * rng.standard_normal(imgs.shape)
    return imgs.reshape(n, 64), y


def make_task(kind: str, n_shards: int, iid: bool = True,
              rng: np.random.Generator | None = None, *, dim: int = 20,
              n_samples: int = 500, n_test: int = 500, label_noise: float = 0.1,
              separation: float = 1.0, l2_reg: float | None = None) -> Task:
    """Generate one of the built-in synthetic tasks.

    ``dim`` is the feature count for ``quadratic``/``logistic`` (the logistic
    model has one extra bias weight); ``tiny_digits`` ignores it. For
    ``quadratic``, ``label_noise`` is the std of the regression residual; for
    ``logistic`` it is the fraction of training labels flipped at random, and
    ``separation`` scales the distance between the two class means.
    """
    rng = np.random.default_rng() if rng is None else rng
    if kind not in KINDS:
        raise InvalidInputError(f"kind must be one of {KINDS}, got {kind!r}")
    if n_samples < n_shards:
        raise InvalidInputError(f"{n_samples} samples cannot fill {n_shards} shards")
    total = n_samples + n_test
    if kind == "quadratic":
        X = rng.standard_normal((total, dim))
        w_true = rng.standard_normal(dim)
        y = X @ w_true + label_noise * rng.standard_normal(total)
    elif kind == "logistic":
        direction = rng.standard_normal(dim)
        direction *= separation / np.linalg.norm(direction)
        y = rng.integers(0, 2, size=total)
        X = rng.standard_normal((total, dim)) + np.where(y[:, None] == 1, direction, -direction)
        flip = rng.random(total) < label_noise
        y = np.where(flip, 1 - y, y)
    else:
        X_tr, y_tr = _tiny_digits(n_samples, rng)
        X_te, y_te = _tiny_digits(n_test, rng)
        X, y = np.vstack([X_tr, X_te]), np.concatenate([y_tr, y_te])
    return task_from_data(kind, X[:n_samples], y[:n_samples], n_shards, iid, rng,
                          l2_reg=l2_reg, X_test=X[n_samples:], y_test=y[n_samples:])


def load_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``features..., label`` rows (optional non-numeric header skipped)."""
    rows = []
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1:
                    continue
                raise InvalidInputError(f"{path}:{lineno}: non-numeric value in {row!r}")
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise InvalidInputError(f"{path}: rows must all have >= 2 equal-width columns")
    data = np.asarray(rows)
    return data[:, :-1], data[:, -1]
