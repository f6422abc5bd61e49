"""Experiment configuration, orchestration and CSV metrics.

Configs are flat ``key = value`` text files with ``#`` comments. Every key
maps onto a field of :class:`ExperimentConfig`; unknown keys are an error.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import baselines, grouping
from .clients import ADVERSARY_KINDS, AdversarySpec
from .errors import ConfigError, InvalidInputError
from .protocol import (BYTES_PER_FLOAT, RoundConfig, RoundRecord, _stream,
                       expected_overhead, participant_updates, run_training)
from .tasks import KINDS, Task, evaluate, load_csv_dataset, make_task, task_from_data

AGGREGATORS = ("dsfl", "fedavg", "median", "trimmed_mean", "krum", "lsfl")

METRIC_COLUMNS = ("round", "loss", "accuracy", "dist_to_opt", "attacker_selected_count",
                  "attacker_success_rate", "active_participants", "bytes_sent")

COMPARE_COLUMNS = ("aggregator", "byz_fraction", "rounds", "loss", "accuracy", "dist_to_opt",
                   "mean_attacker_success_rate", "active_participants", "total_bytes")

_ROUND_FIELDS = {f.name for f in fields(RoundConfig)}


@dataclass(frozen=True)
class ExperimentConfig:
    # protocol
    n_participants: int = 10
    byz_fraction: float = 0.2
    noise_std: float = 20.0
    group_size: int = 3
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
    # task
    task: str = "quadratic"
    task_dim: int = 20
    task_samples: int = 500
    task_test: int = 500
    task_iid: bool = True
    task_label_noise: float = 0.1
    task_separation: float = 1.0
    task_l2: float | None = None
    task_csv: str | None = None
    # adversaries; count defaults to round(byz_fraction * n_participants)
    adversary: str = "inversion"
    adversary_count: int | None = None
    adversary_q: float = -1.0
    adversary_noise_std: float = 1.0
    # aggregation and run
    aggregator: str = "dsfl"
    trim_frac: float = 0.2
    krum_f: int | None = None
    rounds: int = 100
    out: str | None = None

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")
        if self.adversary not in ADVERSARY_KINDS:
            raise ConfigError(f"adversary must be one of {ADVERSARY_KINDS}, got {self.adversary!r}")
        if self.task not in KINDS:
            raise ConfigError(f"task must be one of {KINDS}, got {self.task!r}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        try:
            self.round_config()
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc

    def round_config(self) -> RoundConfig:
        return RoundConfig(**{name: getattr(self, name) for name in _ROUND_FIELDS})

    @property
    def n_adversaries(self) -> int:
        if self.adversary == "honest":
            return 0
        if self.adversary_count is not None:
            return self.adversary_count
        return int(round(self.byz_fraction * self.n_participants))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _field_types() -> dict:
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in fields(ExperimentConfig)}


def _coerce(raw: str, tp):
    text = raw.strip()
    args = typing.get_args(tp)
    if typing.get_origin(tp) in (typing.Union, types.UnionType) and type(None) in args:
        if text.lower() in ("", "none", "null"):
            return None
        tp = next(a for a in args if a is not type(None))
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(text)
    if tp is float:
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"not a finite number: {raw!r}")
        return value
    return text


def parse_pairs(pairs: Iterable[tuple[str, str]], source: str = "<config>",
                base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from ``(key, value)`` strings on top of ``base``."""
    types_ = _field_types()
    values = {}
    for where, (key, raw) in pairs:
        if key not in types_:
            raise ConfigError(f"{source}{where}: unknown key {key!r}")
        try:
            values[key] = _coerce(raw, types_[key])
        except ValueError as exc:
            raise ConfigError(f"{source}{where}: bad value for {key!r}: {exc}") from None
    base = base or ExperimentConfig()
    return base.replace(**values)


def parse_config_text(text: str, source: str = "<config>",
                      base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        pairs.append((f":{lineno}", (key.strip(), raw)))
    return parse_pairs(pairs, source, base)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path), base)


def parse_overrides(items: Iterable[str], base: ExperimentConfig) -> ExperimentConfig:
    pairs = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        pairs.append(("", (key.strip(), raw)))
    return parse_pairs(pairs, "--set", base)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    round: int
    loss: float
    accuracy: float | None
    dist_to_opt: float | None
    attacker_selected_count: int
    attacker_success_rate: float
    active_participants: int
    bytes_sent: int


def build_task(cfg: ExperimentConfig) -> Task:
    rng = _stream(cfg.seed, 7)
    if cfg.task_csv:
        X, y = load_csv_dataset(cfg.task_csv)
        return task_from_data(cfg.task, X, y, cfg.n_participants, cfg.task_iid, rng,
                              test_fraction=0.2, l2_reg=cfg.task_l2)
    return make_task(cfg.task, cfg.n_participants, cfg.task_iid, rng, dim=cfg.task_dim,
                     n_samples=cfg.task_samples, n_test=cfg.task_test,
                     label_noise=cfg.task_label_noise, separation=cfg.task_separation,
                     l2_reg=cfg.task_l2)


def build_adversary(cfg: ExperimentConfig) -> AdversarySpec:
    count = cfg.n_adversaries
    if count == 0:
        return AdversarySpec("honest")
    if count > cfg.n_participants:
        raise ConfigError("more adversaries than participants")
    members = _stream(cfg.seed, 8).choice(cfg.n_participants, size=count, replace=False)
    return AdversarySpec(cfg.adversary, frozenset(members.tolist()), q=cfg.adversary_q,
                         noise_std=cfg.adversary_noise_std)


def _success(selected_ids, active_ids, adversary_ids) -> tuple[int, float]:
    active_bad = [i for i in active_ids if i in adversary_ids]
    hit = sum(1 for i in selected_ids if i in adversary_ids)
    return hit, (hit / len(active_bad) if active_bad else 0.0)


def _row(t, metrics, selected_ids, active_ids, adversary_ids, nbytes) -> MetricsRow:
    hit, rate = _success(selected_ids, active_ids, adversary_ids)
    return MetricsRow(round=t, loss=metrics["loss"], accuracy=metrics["accuracy"],
                      dist_to_opt=metrics["dist_to_opt"], attacker_selected_count=hit,
                      attacker_success_rate=rate, active_participants=len(active_ids),
                      bytes_sent=int(nbytes))


def _plain_bytes(aggregator: str, n: int, dim: int) -> int:
    vec = dim * BYTES_PER_FLOAT
    if aggregator == "lsfl":
        # two shares each, z1 to SP, per-participant report to TP, broadcast
        return 2 * n * vec + vec + n * vec + vec
    return n * vec + vec


def _run_plain(cfg: ExperimentConfig, task: Task, adversary: AdversarySpec,
               on_round: Callable | None) -> list[MetricsRow]:
    rcfg = cfg.round_config()
    ids = list(range(cfg.n_participants))
    w = task.init_model()
    f = cfg.krum_f if cfg.krum_f is not None else cfg.n_adversaries
    rows = []
    for t in range(1, cfg.rounds + 1):
        updates = participant_updates(rcfg, task, adversary, w, ids, t)
        selected = ids
        if cfg.aggregator == "fedavg":
            w = baselines.fedavg(updates)
        elif cfg.aggregator == "median":
            w = baselines.coord_median(updates)
        elif cfg.aggregator == "trimmed_mean":
            w = baselines.trimmed_mean(updates, cfg.trim_frac)
        elif cfg.aggregator == "krum":
            idx = baselines.krum_index(updates, f)
            w = np.array(updates[idx])
            selected = [ids[idx]]
        elif cfg.aggregator == "lsfl":
            w = baselines.lsfl_round(updates, cfg.noise_std, _stream(cfg.seed, 2, t)).global_model
        metrics = evaluate(task, w)
        row = _row(t, metrics, selected, ids, adversary.member_ids,
                   _plain_bytes(cfg.aggregator, len(ids), task.dim))
        if on_round is not None:
            on_round(RoundRecord(round=t, global_model=w, metrics=metrics, selection=None,
                                 participant_ids=ids, adversary_ids=adversary.member_ids))
        rows.append(row)
    return rows


def run_experiment(cfg: ExperimentConfig, on_round: Callable | None = None,
                   task: Task | None = None) -> list[MetricsRow]:
    """Run one configured experiment and write its CSV if ``cfg.out`` is set.

    ``on_round`` receives every :class:`~dsfl.protocol.RoundRecord`; for DSFL
    runs it carries the full round transcript.
    """
    task = build_task(cfg) if task is None else task
    adversary = build_adversary(cfg)
    if cfg.aggregator == "dsfl":
        history = run_training(cfg.round_config(), task, adversary, cfg.rounds, on_round=on_round,
                               keep_transcripts=False)
        rows = []
        for rec in history:
            nbytes = _dsfl_bytes(rec, task.dim, cfg)
            rows.append(_row(rec.round, rec.metrics, rec.selected_ids, rec.participant_ids,
                             rec.adversary_ids, nbytes))
    else:
        rows = _run_plain(cfg, task, adversary, on_round)
    if cfg.out:
        write_metrics_csv(rows, cfg.out)
    return rows


def _dsfl_bytes(rec: RoundRecord, dim: int, cfg: ExperimentConfig) -> int:
    n = len(rec.participant_ids)
    m = grouping.plan_groups(n, 100.0 * cfg.byz_fraction, min(cfg.group_size, n), cfg.n_groups)
    return expected_overhead(n, dim, m, cfg.round_config().threshold)["bytes_per_round"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(target, header, records) -> None:
    if hasattr(target, "write"):
        writer = csv.writer(target, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(records)
        return
    with open(target, "w", newline="") as fh:
        _write_csv(fh, header, records)


def write_metrics_csv(rows: Iterable[MetricsRow], target) -> None:
    """Write rows to a path or an open text file."""
    _write_csv(target, METRIC_COLUMNS,
               ([_fmt(getattr(row, c)) for c in METRIC_COLUMNS] for row in rows))


def summarize(cfg: ExperimentConfig, rows: list[MetricsRow]) -> dict:
    last = rows[-1]
    return {
        "aggregator": cfg.aggregator,
        "byz_fraction": cfg.byz_fraction,
        "rounds": cfg.rounds,
        "loss": last.loss,
        "accuracy": last.accuracy,
        "dist_to_opt": last.dist_to_opt,
        "mean_attacker_success_rate": float(np.mean([r.attacker_success_rate for r in rows])),
        "active_participants": last.active_participants,
        "total_bytes": sum(r.bytes_sent for r in rows),
    }


def compare_matrix(cfg_base: ExperimentConfig, aggregators: Iterable[str],
                   betas: Iterable[float], out=None) -> list[dict]:
    """One final-metrics row per ``(aggregator, beta)``, in sweep order."""
    results = []
    for agg in aggregators:
        for beta in betas:
            cfg = cfg_base.replace(aggregator=agg, byz_fraction=float(beta), out=None)
            results.append(summarize(cfg, run_experiment(cfg)))
    if out is not None:
        _write_csv(out, COMPARE_COLUMNS, ([_fmt(row[c]) for c in COMPARE_COLUMNS] for row in results))
    return results


def overhead_report(cfg: ExperimentConfig, dim: int | None = None) -> dict:
    """Per-round message count and bytes of a full-participation DSFL round."""
    n = cfg.n_participants
    if dim is None:
        dim = build_task(cfg).dim
    gs = min(cfg.group_size, n)
    m = grouping.plan_groups(n, 100.0 * cfg.byz_fraction, gs, cfg.n_groups)
    return expected_overhead(n, dim, m, cfg.round_config().threshold)


def seed_from_env(default: int | None = None) -> int | None:
    raw = os.environ.get("DSFL_SEED")
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"DSFL_SEED must be an integer, got {raw!r}") from None
