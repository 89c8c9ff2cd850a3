"""Parameter containers, group partitions and step-size schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class StructureError(ValueError):
    """Raised when a layout, partition or pattern is inconsistent."""


class InvalidScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSlot:
    name: str
    shape: tuple[int, ...]
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


def make_layout(shapes: Sequence[tuple[str, tuple[int, ...]]]) -> tuple[LayerSlot, ...]:
    """Pack named shapes contiguously, in order."""
    slots = []
    offset = 0
    for name, shape in shapes:
        shape = tuple(int(s) for s in shape)
        size = int(np.prod(shape)) if shape else 1
        slots.append(LayerSlot(name, shape, offset, offset + size))
        offset += size
    return tuple(slots)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """A flat real vector together with the named-layer layout it packs.

    ``np.asarray(pv)`` gives the flat values, so a ParamVector can be passed
    anywhere an array is expected.
    """

    values: np.ndarray
    layout: tuple[LayerSlot, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise StructureError("values must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)):
            raise StructureError("values must be finite")
        pos = 0
        for slot in self.layout:
            if slot.start != pos or slot.stop <= slot.start:
                raise StructureError(f"layer {slot.name!r} breaks contiguity at {pos}")
            if int(np.prod(slot.shape) if slot.shape else 1) != slot.size:
                raise StructureError(f"layer {slot.name!r} shape does not match its range")
            pos = slot.stop
        if pos != values.size:
            raise StructureError(f"layout covers {pos} entries, vector has {values.size}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size

    @property
    def dim(self) -> int:
        return self.values.size

    def slot(self, name: str) -> LayerSlot:
        for s in self.layout:
            if s.name == name:
                return s
        raise KeyError(name)

    def layer(self, name: str) -> np.ndarray:
        """Reshaped (read-only) view of one layer."""
        s = self.slot(name)
        view = self.values[s.start:s.stop].reshape(s.shape)
        view.flags.writeable = False
        return view

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.layout)

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    __hash__ = None


def as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def like(template, values: np.ndarray):
    """Return ``values`` wrapped the same way as ``template``."""
    if isinstance(template, ParamVector):
        return template.with_values(values)
    return values


class GroupPartition:
    """Disjoint, weighted index groups over a parameter vector.

    Coordinates that belong to no group are left out on purpose (biases,
    for instance); ``covered`` marks the ones that do belong to a group.

    Parameters
    ----------
    groups : sequence of integer index arrays
        Pairwise disjoint and nonempty.
    weights : sequence of float, optional
        Positive per-group weights. Defaults to ``sqrt(len(group))``.
    dim : int, optional
        Length of the vectors this partition applies to. When given, indices
        are checked against it.
    """

    def __init__(self, groups, weights=None, dim: int | None = None):
        groups = tuple(np.asarray(g, dtype=np.intp).ravel() for g in groups)
        for k, g in enumerate(groups):
            if g.size == 0:
                raise StructureError(f"group {k} is empty")
        if weights is None:
            weights = [math.sqrt(g.size) for g in groups]
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size != len(groups):
            raise StructureError(
                f"{weights.size} weights given for {len(groups)} groups")
        if np.any(~(weights > 0)):
            raise StructureError("group weights must be positive")

        flat = np.concatenate(groups) if groups else np.zeros(0, dtype=np.intp)
        if flat.size and flat.min() < 0:
            raise StructureError("negative index in partition")
        if dim is not None and flat.size and flat.max() >= dim:
            raise StructureError(f"partition index {flat.max()} out of range for dim {dim}")
        if np.unique(flat).size != flat.size:
            raise StructureError("groups overlap")

        self.groups = groups
        self.weights = weights
        self.dim = dim
        self.index = flat
        self.group_id = np.repeat(np.arange(len(groups)), [g.size for g in groups])
        self.sizes = np.array([g.size for g in groups], dtype=np.intp)

    def __len__(self) -> int:
        return len(self.groups)

    def __repr__(self):
        return f"GroupPartition(n_groups={len(self)}, covered={self.index.size}, dim={self.dim})"

    def __eq__(self, other):
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return (len(self) == len(other)
                and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups))
                and np.array_equal(self.weights, other.weights))

    def check(self, dim: int) -> None:
        if self.index.size and self.index.max() >= dim:
            raise StructureError(
                f"partition index {self.index.max()} out of range for vector of length {dim}")
        if self.dim is not None and self.dim != dim:
            raise StructureError(f"partition built for dim {self.dim}, got {dim}")

    def covered(self, dim: int) -> np.ndarray:
        self.check(dim)
        mask = np.zeros(dim, dtype=bool)
        mask[self.index] = True
        return mask

    def norms(self, v: np.ndarray) -> np.ndarray:
        """Euclidean norm of every group of ``v``.

        Entries are divided by their group's largest magnitude before
        squaring, so tiny or huge groups neither underflow nor overflow.
        """
        v = np.asarray(v, dtype=float)
        self.check(v.size)
        x = np.abs(v[self.index])
        big = np.zeros(len(self))
        np.maximum.at(big, self.group_id, x)
        safe = np.where(big > 0, big, 1.0)
        sq = np.bincount(self.group_id, weights=(x / safe[self.group_id]) ** 2,
                         minlength=len(self))
        return np.sqrt(sq) * big

    def nonzero_counts(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        self.check(v.size)
        return np.bincount(self.group_id, weights=(v[self.index] != 0).astype(float),
                           minlength=len(self))


def beta(t: int) -> float:
    """Dual-averaging scale ``sqrt(t)`` for step ``t >= 1``."""
    if t < 1:
        raise ValueError(f"step counter must be >= 1, got {t}")
    return math.sqrt(t)


@dataclass(frozen=True)
class Schedule:
    """A function of the (zero-based) epoch index.

    kind="multistep" evaluates ``base * factor ** (epoch // period)`` and then
    applies ``floor`` (max) and/or ``cap`` (min) when they are set.
    kind="constant" returns ``base``. kind="table" holds ``(start_epoch,
    value)`` pairs sorted by start epoch; the last pair whose start is
    ``<= epoch`` wins.
    """

    kind: str = "constant"
    base: float = 0.1
    period: int = 1
    factor: float = 1.0
    floor: float | None = None
    cap: float | None = None
    table: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("multistep", "constant", "table"):
            raise InvalidScheduleError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "multistep" and self.period < 1:
            raise InvalidScheduleError("period must be a positive integer")
        if self.kind == "table":
            table = tuple((int(e), float(v)) for e, v in self.table)
            if not table or table[0][0] != 0:
                raise InvalidScheduleError("table schedule must start at epoch 0")
            if any(b[0] <= a[0] for a, b in zip(table, table[1:])):
                raise InvalidScheduleError("table epochs must be strictly increasing")
            object.__setattr__(self, "table", table)

    def __call__(self, epoch) -> float:
        if self.kind == "constant":
            return float(self.base)
        if self.kind == "table":
            value = self.table[0][1]
            for start, v in self.table:
                if start > epoch:
                    break
                value = v
            return value
        value = self.base * self.factor ** (int(epoch) // self.period)
        if self.floor is not None:
            value = max(self.floor, value)
        if self.cap is not None:
            value = min(self.cap, value)
        return float(value)

    def values(self, epochs) -> np.ndarray:
        epochs = np.asarray(epochs)
        if self.kind == "multistep":
            out = self.base * self.factor ** (epochs // self.period).astype(float)
            if self.floor is not None:
                out = np.maximum(self.floor, out)
            if self.cap is not None:
                out = np.minimum(self.cap, out)
            return out
        return np.array([self(e) for e in epochs.ravel()], dtype=float).reshape(epochs.shape)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "base": self.base}
        if self.kind == "multistep":
            d.update(period=self.period, factor=self.factor)
            if self.floor is not None:
                d["floor"] = self.floor
            if self.cap is not None:
                d["cap"] = self.cap
        if self.kind == "table":
            d = {"kind": "table", "table": [list(p) for p in self.table]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        d = dict(d)
        for k in ("base", "factor", "floor", "cap"):
            if d.get(k) is not None:
                d[k] = float(d[k])
        if "period" in d:
            d["period"] = int(d["period"])
        if "table" in d:
            d["table"] = tuple(tuple(p) for p in d["table"])
        return cls(**d)


@dataclass
class ScheduleReport:
    passed: bool
    tau_sum_diverges: bool
    tau_sq_sum_converges: bool
    tau_vanishes: bool
    tau_sum: float
    tau_sum_last_half: float
    tau_sq_sum: float
    tau_sq_tail_fraction: float
    tau_last: float
    alpha_last: float


def _evaluate_steps(eta: Callable, ts: np.ndarray) -> np.ndarray:
    if isinstance(eta, Schedule):
        return eta.values(ts)
    try:
        out = np.asarray(eta(ts), dtype=float)
        if out.shape == ts.shape:
            return out
    except Exception:
        pass
    return np.fromiter((eta(int(t)) for t in ts), dtype=float, count=ts.size)


def validate_schedule(eta: Callable, horizon: int = 10**6, *,
                      plateau_tol: float = 1e-2, tail_fraction: float = 0.1,
                      decay_ratio: float = 0.75) -> ScheduleReport:
    """Check the step-size conditions behind variance reduction on a finite horizon.

    With ``s_t = eta(t) sqrt(t)``, ``alpha_t = sum_{k<=t} s_k`` and
    ``tau_t = s_t / alpha_t``, the schedule should make ``sum tau_t``
    diverge, ``sum tau_t**2`` converge and ``tau_t`` vanish. Infinite sums
    are replaced by proxies over ``t = 1..horizon``:

    (a) the partial sums of ``tau`` are strictly increasing and the last half
        of the horizon still adds at least ``plateau_tol`` of the total;
    (b) the last half contributes less than ``tail_fraction`` of the
        partial sum of ``tau**2``;
    (c) ``tau`` is non-increasing over the last half and its final value is
        at most ``decay_ratio`` times its mid-horizon value (``tau ~ 1/t``
        halves; a ``tau`` levelling off at a positive constant does not).

    ``eta`` is any callable of the step index (a :class:`Schedule` works).
    """
    if horizon < 1000:
        raise ValueError("horizon must be at least 1000")
    ts = np.arange(1, horizon + 1)
    etas = _evaluate_steps(eta, ts)
    bad = np.flatnonzero(~(etas > 0) | ~np.isfinite(etas))
    if bad.size:
        t = int(ts[bad[0]])
        raise InvalidScheduleError(f"eta({t}) = {etas[bad[0]]!r} is not a positive finite number")

    s = etas * np.sqrt(ts)
    alpha = np.cumsum(s)
    tau = s / alpha
    S = np.cumsum(tau)
    half = horizon // 2

    increasing = bool(np.all(np.diff(S) > 0))
    last_half = float(S[-1] - S[half - 1])
    cond_a = increasing and last_half >= plateau_tol * S[-1]

    tau_sq = tau ** 2
    total_sq = float(math.fsum(tau_sq))
    tail_sq = float(math.fsum(tau_sq[half:]))
    cond_b = tail_sq < tail_fraction * total_sq

    tail = tau[half - 1:]
    cond_c = bool(np.all(np.diff(tail) <= 0) and tail[-1] <= decay_ratio * tail[0])

    return ScheduleReport(
        passed=bool(cond_a and cond_b and cond_c),
        tau_sum_diverges=bool(cond_a),
        tau_sq_sum_converges=bool(cond_b),
        tau_vanishes=cond_c,
        tau_sum=float(S[-1]),
        tau_sum_last_half=last_half,
        tau_sq_sum=total_sq,
        tau_sq_tail_fraction=tail_sq / total_sq,
        tau_last=float(tau[-1]),
        alpha_last=float(alpha[-1]),
    )
