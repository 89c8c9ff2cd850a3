"""Sparsity, structure identification, accuracy and variance-reduction metrics.

Zeros are detected with exact equality: every prox in this package emits
exact zeros, and a dense method simply scores 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import GroupPartition, StructureError, as_array
from . import models
from .regularizers import zero_pattern


def group_sparsity(W, eval_partition: GroupPartition) -> float:
    """Fraction of groups whose entries are all exactly zero."""
    if len(eval_partition) == 0:
        return 0.0
    return float(zero_pattern(None, W, eval_partition).mean())


def pattern_match(W, truth_pattern, eval_partition: GroupPartition) -> float:
    """Fraction of groups whose zero/nonzero status agrees with ``truth_pattern``."""
    truth = np.asarray(truth_pattern, dtype=bool)
    if truth.shape != (len(eval_partition),):
        raise StructureError(
            f"pattern has {truth.size} entries for {len(eval_partition)} groups")
    return float((zero_pattern(None, W, eval_partition) == truth).mean())


def unstructured_sparsity(W, partition: GroupPartition | None = None) -> float:
    """Fraction of exactly-zero coordinates among the regularized ones.

    Without a partition every coordinate counts as regularized.
    """
    x = as_array(W)
    if partition is not None:
        x = x[partition.covered(x.size)]
    if x.size == 0:
        return 0.0
    return float(np.mean(x == 0))


def accuracy(spec, W, dataset, chunk: int = 8192) -> float:
    """Argmax accuracy; ties go to the lowest class index."""
    X, y = dataset.inputs, dataset.labels
    correct = 0
    for lo in range(0, len(y), chunk):
        z = models.logits(spec, W, X[lo:lo + chunk])
        correct += int(np.sum(np.argmax(z, axis=1) == y[lo:lo + chunk]))
    return correct / len(y)


class UndefinedDiagnosticError(ValueError):
    pass


def vr_diagnostic(state, spec, dataset) -> float:
    """``|| V / alpha - grad f(W_prev) ||`` for an RMDA state.

    ``W_prev`` is the iterate the most recent stochastic gradient was taken
    at, and ``grad f`` is the exact full-data gradient (no augmentation).
    """
    if state.t < 1 or state.W_prev is None:
        raise UndefinedDiagnosticError("no step taken since the last (re)start")
    full = models.full_gradient(spec, state.W_prev, dataset)
    return float(np.linalg.norm(state.V / state.alpha_total - full))


def pattern_string(pattern) -> str:
    """Compact text form of a zero pattern: '1' for a zero group."""
    return "".join("1" if z else "0" for z in np.asarray(pattern, dtype=bool))


def pattern_stable(patterns, fraction: float = 0.2) -> bool:
    """True iff the zero pattern is constant over the final ``fraction`` of entries."""
    patterns = list(patterns)
    if not patterns:
        return False
    k = max(1, int(np.ceil(fraction * len(patterns))))
    tail = patterns[-k:]
    return all(p == tail[0] for p in tail)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    group_sparsity: float
    unstructured_sparsity: float
    pattern_match: float | None
    vr_diagnostic: float | None
    iterate_gap: float | None
    learning_rate: float
    momentum_c: float | None
    zero_pattern: str

    def __post_init__(self):
        for name in ("group_sparsity", "unstructured_sparsity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.vr_diagnostic is not None and self.vr_diagnostic < 0:
            raise ValueError("vr_diagnostic must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


RECORD_COLUMNS = tuple(EpochRecord.__dataclass_fields__)
