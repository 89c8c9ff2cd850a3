"""Experiment orchestration: build everything from a config, train, log.

Logs are JSON lines: a header (config, overrides, column names), one record
per logged epoch with the :class:`~rmda.metrics.EpochRecord` columns, and a
closing summary. Nothing time- or host-dependent is written, so identical
configs give byte-identical logs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import metrics, models, regularizers
from .config import ConfigError, ExperimentConfig
from .core import GroupPartition, ParamVector, Schedule
from .data import (AugmentationPolicy, DataError, Dataset, contiguous_groups,
                   gen_synthetic, load_mnist_idx, sampler)
from .optimizers import (NumericError, msgd_init, msgd_step, proxmsgd_step, rda_step,
                         restart, rmda_init, rmda_step)

DATA_DIR_ENV = "RMDA_DATA_DIR"


@dataclass
class Setup:
    spec: object
    train: Dataset
    val: Dataset
    train_partition: GroupPartition
    eval_partition: GroupPartition
    truth_pattern: np.ndarray | None
    W0: ParamVector
    reg: object
    notes: dict


def _seeds(seed: int):
    data_seq, init_seq, sample_seq = np.random.SeedSequence(seed).spawn(3)
    as_int = lambda s: int(s.generate_state(1, dtype=np.uint32)[0])
    return as_int(data_seq), np.random.default_rng(init_seq), as_int(sample_seq)


def _grouping(spec, scheme, dataset: Dataset):
    if scheme is None:
        return None
    if scheme == "data":
        if dataset.partition is None:
            raise ConfigError("grouping 'data' needs a dataset that carries a partition")
        return dataset.partition
    try:
        return models.build_groups(spec, scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve(path: str, notes: dict) -> Path:
    base = os.environ.get(DATA_DIR_ENV)
    p = Path(path)
    if base and not p.is_absolute():
        notes["data_dir"] = base
        p = Path(base) / p
    if not p.exists() and p.with_name(p.name + ".gz").exists():
        p = p.with_name(p.name + ".gz")
    return p


def build_regularizer(d: dict, partition: GroupPartition):
    kind = d.get("kind", "none")
    f = lambda k, default=0.0: float(d.get(k, default))
    if kind == "none":
        return regularizers.NoRegularizer()
    if kind == "l1":
        return regularizers.L1(f("lam"), partition if d.get("grouped_only", True) else None)
    if kind == "group_lasso":
        return regularizers.GroupLasso(f("lam"), partition)
    if kind == "sparse_group_lasso":
        return regularizers.SparseGroupLasso(f("lam1"), f("lamG"), partition)
    if kind == "group_mcp":
        return regularizers.GroupMCP(f("lam"), f("omega"), partition)
    if kind == "l1_group_mcp":
        return regularizers.L1GroupMCP(f("lam1"), f("lamG"), f("omega"), partition)
    if kind == "box":
        return regularizers.BoxIndicator(f("lo"), f("hi", 1.0))
    raise ConfigError(f"unknown regularizer {kind!r}")


def prepare(cfg: ExperimentConfig) -> Setup:
    """Materialize model, data, groupings, initial point and regularizer."""
    cfg.validate()
    data_seed, init_rng, _ = _seeds(cfg.seed)
    notes = {}
    try:
        spec = models.from_description(cfg.model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model: {exc}") from exc

    d = dict(cfg.data)
    if d["source"] == "synthetic":
        n, n_val = int(d.get("n", 1000)), int(d.get("n_val", 0))
        if isinstance(spec, models.LogisticRegression):
            features = contiguous_groups(spec.in_dim, int(d.get("groups", 10)))
            partition = models.feature_groups(spec, features)
        else:
            partition = models.build_groups(spec, cfg.grouping.get("train"))
        full = gen_synthetic(spec.in_dim, partition, float(d.get("zero_fraction", 0.5)),
                             n + n_val, float(d.get("margin", 0.5)),
                             int(d.get("seed", data_seed)), model=spec,
                             classes=getattr(spec, "classes", 2))
        train = full.subset(slice(0, n))
        val = full.subset(slice(n, n + n_val)) if n_val else train
    else:
        try:
            train = load_mnist_idx(_resolve(d["train_images"], notes),
                                   _resolve(d["train_labels"], notes))
            if d.get("val_images"):
                val = load_mnist_idx(_resolve(d["val_images"], notes),
                                     _resolve(d["val_labels"], notes))
            else:
                val = train
        except KeyError as exc:
            raise ConfigError(f"idx data needs {exc}") from exc
        except OSError as exc:
            raise DataError(f"cannot read data: {exc}") from exc
        if d.get("limit"):
            train = train.subset(slice(0, int(d["limit"])))

    train_partition = _grouping(spec, cfg.grouping.get("train"), train)
    if train_partition is None:
        raise ConfigError("grouping.train is required")
    eval_partition = _grouping(spec, cfg.grouping.get("eval"), train)
    if eval_partition is None:
        eval_partition = train_partition
    truth = None
    if train.ground_truth is not None:
        truth = regularizers.zero_pattern(None, train.ground_truth, eval_partition)

    kind = cfg.init.get("kind", "uniform")
    if kind == "zeros":
        W0 = models.zeros(spec)
    elif kind == "truth_noise":
        if train.ground_truth is None:
            raise ConfigError("init 'truth_noise' needs synthetic data")
        sigma = float(cfg.init.get("sigma", 0.1))
        W0 = train.ground_truth.with_values(
            train.ground_truth.values + sigma * init_rng.standard_normal(train.ground_truth.dim))
    else:
        W0 = models.init_params(spec, init_rng)

    try:
        reg = build_regularizer(cfg.regularizer, train_partition)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Setup(spec, train, val, train_partition, eval_partition, truth, W0, reg, notes)


class _Log:
    def __init__(self, path):
        self.fh = None
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(path, "w", encoding="utf-8")

    def write(self, obj: dict) -> None:
        if self.fh:
            self.fh.write(json.dumps(obj) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def _regularized_mask_partition(reg, setup: Setup):
    if isinstance(reg, regularizers.L1) and reg.partition is None:
        return None
    return setup.train_partition


def _record(epoch, cfg, setup, state, kind) -> metrics.EpochRecord:
    spec = setup.spec
    W = state.W
    structure = state.Wtilde if kind in ("rmda", "rda") else W
    train_loss = models.full_loss_and_grad(spec, W, setup.train)[0]
    pattern = regularizers.zero_pattern(setup.reg, structure, setup.eval_partition)
    vr = gap = c = None
    if kind in ("rmda", "rda"):
        if state.t >= 1:
            vr = metrics.vr_diagnostic(state, spec, setup.train)
        gap = float(np.linalg.norm(W - state.Wtilde))
        c = 1.0 if kind == "rda" else state.c(epoch)
    else:
        c = state.mu
    return metrics.EpochRecord(
        epoch=epoch,
        train_loss=float(train_loss),
        train_accuracy=metrics.accuracy(spec, W, setup.train),
        val_accuracy=metrics.accuracy(spec, W, setup.val),
        group_sparsity=metrics.group_sparsity(structure, setup.eval_partition),
        unstructured_sparsity=metrics.unstructured_sparsity(
            structure, _regularized_mask_partition(setup.reg, setup)),
        pattern_match=(None if setup.truth_pattern is None else
                       metrics.pattern_match(structure, setup.truth_pattern, setup.eval_partition)),
        vr_diagnostic=vr,
        iterate_gap=gap,
        learning_rate=state.eta(epoch),
        momentum_c=c,
        zero_pattern=metrics.pattern_string(pattern),
    )


def run_experiment(cfg: ExperimentConfig, *, overrides: dict | None = None,
                   on_step=None, on_epoch=None) -> list[metrics.EpochRecord]:
    """Train as configured and return the logged records.

    Records are also written to ``cfg.output`` when it is set. ``on_step``
    (called as ``on_step(epoch, state)`` after each optimizer step) and
    ``on_epoch(epoch, state)`` let callers observe the internal state. BLAS
    is pinned to one thread so results do not depend on the host's thread
    count.
    """
    with threadpool_limits(limits=1):
        return _run(cfg, overrides or {}, on_step, on_epoch)


def _run(cfg, overrides, on_step, on_epoch):
    setup = prepare(cfg)
    opt = cfg.optimizer
    kind = opt.kind
    W0 = setup.W0.values
    if kind in ("rmda", "rda"):
        c = opt.c if opt.c is not None else Schedule("constant", 1.0)
        state = rmda_init(W0, setup.reg, opt.eta, c)
        step = rmda_step if kind == "rmda" else rda_step
    else:
        reg = setup.reg if kind == "proxsgd" else regularizers.NoRegularizer()
        state = msgd_init(W0, opt.momentum, opt.eta, reg)
        step = proxmsgd_step if kind == "proxsgd" else msgd_step

    _, _, sample_seed = _seeds(cfg.seed)
    stream = sampler(setup.train, cfg.batch_size, AugmentationPolicy(**cfg.augmentation),
                     sample_seed)
    restarts = set(opt.restart_epochs)
    log = _Log(cfg.output)
    log.write({"type": "header", "name": cfg.name, "config": cfg.to_dict(),
               "overrides": overrides, "columns": list(metrics.RECORD_COLUMNS),
               "n_params": int(W0.size), "n_groups": len(setup.eval_partition),
               **setup.notes})
    records = []
    try:
        for epoch in range(cfg.epochs):
            if epoch in restarts:
                state = restart(state)
            for batch in stream.epoch():
                _, grad = models.loss_and_grad(setup.spec, state.W, batch)
                state = step(state, grad, epoch)
                if on_step is not None:
                    on_step(epoch, state)
            if (epoch + 1) % cfg.log_interval == 0 or epoch == cfg.epochs - 1:
                rec = _record(epoch, cfg, setup, state, kind)
                if not math.isfinite(rec.train_loss):
                    raise NumericError(f"training loss diverged at epoch {epoch}")
                records.append(rec)
                log.write({"type": "epoch", **rec.to_dict()})
            if on_epoch is not None:
                on_epoch(epoch, state)
        log.write({"type": "summary", **summarize(records, cfg.name, kind)})
    finally:
        log.close()
    return records


def summarize(records, name: str = "", optimizer: str = "") -> dict:
    if not records:
        return {"run": name, "optimizer": optimizer, "epochs_logged": 0}
    last = records[-1]
    get = (lambda r, k: getattr(r, k)) if not isinstance(last, dict) else (lambda r, k: r[k])
    return {
        "run": name,
        "optimizer": optimizer,
        "epochs_logged": len(records),
        "final_epoch": get(last, "epoch"),
        "final_train_accuracy": get(last, "train_accuracy"),
        "final_val_accuracy": get(last, "val_accuracy"),
        "final_group_sparsity": get(last, "group_sparsity"),
        "final_pattern_match": get(last, "pattern_match"),
        "pattern_stable": metrics.pattern_stable([get(r, "zero_pattern") for r in records]),
    }


def read_log(path) -> tuple[dict, list[dict], dict | None]:
    header, rows, summary = None, [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            t = obj.pop("type", None)
            if t == "header":
                header = obj
            elif t == "epoch":
                rows.append(obj)
            elif t == "summary":
                summary = obj
    if header is None:
        raise DataError(f"{path}: no header line")
    return header, rows, summary


def compare(log_paths) -> list[dict]:
    """One summary row per log; unreadable logs yield a row with ``error`` set."""
    out = []
    for path in log_paths:
        try:
            header, rows, _ = read_log(path)
            row = summarize(rows, header.get("name", str(path)),
                            header["config"]["optimizer"]["kind"])
            row["error"] = None
        except (OSError, ValueError, KeyError, TypeError) as exc:
            row = {"run": str(path), "error": f"{type(exc).__name__}: {exc}"}
        row["log"] = str(path)
        out.append(row)
    return out


def format_table(rows) -> str:
    cols = ["run", "optimizer", "final_val_accuracy", "final_group_sparsity",
            "pattern_stable", "error"]
    fmt = lambda v: f"{v:.4f}" if isinstance(v, float) else ("" if v is None else str(v))
    table = [cols] + [[fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in table)


def _run_one(cfg):
    return run_experiment(cfg)


def sweep(cfg: ExperimentConfig, seeds, processes: int | None = None):
    """Run ``cfg`` once per seed; runs share nothing and may go in parallel."""
    cfgs = [cfg.replace(seed=int(s), output=None) for s in seeds]
    if processes is None or processes <= 1:
        return [run_experiment(c) for c in cfgs]
    with ProcessPoolExecutor(processes) as ex:
        return list(ex.map(_run_one, cfgs))
