"""Small classifiers with hand-written backpropagation.

Parameters live in one flat vector; each model describes how that vector is
split into named layers. Weight matrices are stored ``(out, in)`` and conv
kernels ``(filters, channels, kh, kw)``. Only weights are ever grouped, so
biases stay unregularized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import GroupPartition, ParamVector, StructureError, as_array, make_layout


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _xent(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


@dataclass(frozen=True)
class LogisticRegression:
    """Linear softmax classifier.

    With two classes a single weight row is kept and the logits are
    ``[0, w.x + b]``; the usual two-row form would leave a flat direction
    and the loss could not be strongly convex.
    """

    in_dim: int
    classes: int = 2

    @property
    def rows(self) -> int:
        return 1 if self.classes == 2 else self.classes

    @property
    def layout(self):
        return make_layout([("fc.weight", (self.rows, self.in_dim)), ("fc.bias", (self.rows,))])

    @property
    def layers(self):
        return [("fc", "fc")]

    def _unpack(self, W):
        W = _flat(W, self.layout)
        k, d = self.rows, self.in_dim
        return W[:k * d].reshape(k, d), W[k * d:]

    def logits(self, W, X):
        A, b = self._unpack(W)
        z = X @ A.T + b
        if self.rows == 1:
            return np.hstack([np.zeros_like(z), z])
        return z

    def loss_and_grad(self, W, X, y):
        A, b = self._unpack(W)
        z = self.logits(W, X)
        loss, dz = _xent(z, y)
        if self.rows == 1:
            dz = dz[:, 1:]
        return loss, np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0)])


@dataclass(frozen=True)
class Mlp:
    """Fully-connected network, ReLU between layers, softmax output.

    ``widths`` lists every layer width from input to output, e.g.
    ``(784, 100, 10)``.
    """

    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise StructureError("an Mlp needs at least input and output widths")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def classes(self) -> int:
        return self.widths[-1]

    @property
    def layout(self):
        shapes = []
        for i, (a, b) in enumerate(zip(self.widths, self.widths[1:])):
            shapes += [(f"fc{i}.weight", (b, a)), (f"fc{i}.bias", (b,))]
        return make_layout(shapes)

    @property
    def layers(self):
        return [(f"fc{i}", "fc") for i in range(len(self.widths) - 1)]

    def _params(self, W):
        W = _flat(W, self.layout)
        out = []
        for slot_w, slot_b in zip(self.layout[::2], self.layout[1::2]):
            out.append((W[slot_w.start:slot_w.stop].reshape(slot_w.shape),
                        W[slot_b.start:slot_b.stop]))
        return out

    def _forward(self, params, X):
        acts = [X]
        h = X
        for i, (A, b) in enumerate(params):
            z = h @ A.T + b
            h = np.maximum(z, 0.0) if i < len(params) - 1 else z
            acts.append(h)
        return acts

    def logits(self, W, X):
        return self._forward(self._params(W), X)[-1]

    def prune_dead(self, W, X) -> np.ndarray:
        """Zero the outgoing weights of hidden units that never fire on ``X``.

        The logits on ``X`` do not change.
        """
        W = _flat(W, self.layout).copy()
        acts = self._forward(self._params(W), X)
        for i, slot in enumerate(self.layout[2::2], start=1):
            dead = ~np.any(acts[i] > 0, axis=0)
            block = W[slot.start:slot.stop].reshape(slot.shape)
            block[:, dead] = 0.0
        return W

    def loss_and_grad(self, W, X, y):
        params = self._params(W)
        acts = self._forward(params, X)
        loss, delta = _xent(acts[-1], y)
        grads = []
        for i in range(len(params) - 1, -1, -1):
            A, _ = params[i]
            grads.append((delta.sum(axis=0), (delta.T @ acts[i]).ravel()))
            if i:
                delta = (delta @ A) * (acts[i] > 0)
        flat = []
        for gb, gA in reversed(grads):
            flat += [gA, gb]
        return loss, np.concatenate(flat)


@dataclass(frozen=True)
class TinyConvNet:
    """One valid, stride-1 convolution with ReLU, then one dense softmax layer.

    Inputs arrive flattened as ``channels * height * width`` per sample.
    """

    channels: int = 1
    height: int = 8
    width: int = 8
    filters: int = 4
    kh: int = 3
    kw: int = 3
    classes: int = 2

    @property
    def in_dim(self) -> int:
        return self.channels * self.height * self.width

    @property
    def out_hw(self) -> tuple[int, int]:
        return self.height - self.kh + 1, self.width - self.kw + 1

    @property
    def layout(self):
        oh, ow = self.out_hw
        return make_layout([
            ("conv.weight", (self.filters, self.channels, self.kh, self.kw)),
            ("conv.bias", (self.filters,)),
            ("fc.weight", (self.classes, self.filters * oh * ow)),
            ("fc.bias", (self.classes,)),
        ])

    @property
    def layers(self):
        return [("conv", "conv"), ("fc", "fc")]

    def _params(self, W):
        W = _flat(W, self.layout)
        return [W[s.start:s.stop].reshape(s.shape) for s in self.layout]

    def _patches(self, X):
        imgs = X.reshape(-1, self.channels, self.height, self.width)
        # (n, C, oh, ow, kh, kw) -> (n, oh, ow, C*kh*kw)
        win = sliding_window_view(imgs, (self.kh, self.kw), axis=(2, 3))
        n, C, oh, ow = win.shape[:4]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, C * self.kh * self.kw)

    def _forward(self, params, X):
        K, kb, A, b = params
        P = self._patches(X)
        pre = P @ K.reshape(self.filters, -1).T + kb          # (n, oh, ow, F)
        h = np.maximum(pre, 0.0)
        flat = h.transpose(0, 3, 1, 2).reshape(X.shape[0], -1)  # filter-major, like torch
        return P, pre, flat, flat @ A.T + b

    def logits(self, W, X):
        return self._forward(self._params(W), X)[-1]

    def prune_dead(self, W, X) -> np.ndarray:
        """Zero the dense-layer columns of conv units that never fire on ``X``."""
        W = _flat(W, self.layout).copy()
        flat = self._forward(self._params(W), X)[2]
        dead = ~np.any(flat > 0, axis=0)
        slot = self.layout[2]
        W[slot.start:slot.stop].reshape(slot.shape)[:, dead] = 0.0
        return W

    def loss_and_grad(self, W, X, y):
        params = self._params(W)
        K, kb, A, b = params
        P, pre, flat, z = self._forward(params, X)
        loss, dz = _xent(z, y)
        gA = dz.T @ flat
        gb = dz.sum(axis=0)
        oh, ow = self.out_hw
        dflat = dz @ A
        dh = dflat.reshape(-1, self.filters, oh, ow).transpose(0, 2, 3, 1)
        dpre = dh * (pre > 0)
        gK = np.einsum("nhwf,nhwk->fk", dpre, P).reshape(K.shape)
        gkb = dpre.sum(axis=(0, 1, 2))
        return loss, np.concatenate([gK.ravel(), gkb, gA.ravel(), gb])


def _flat(W, layout) -> np.ndarray:
    W = as_array(W)
    dim = layout[-1].stop
    if W.shape != (dim,):
        raise StructureError(f"parameter vector has shape {W.shape}, model expects ({dim},)")
    return W


def dim(spec) -> int:
    return spec.layout[-1].stop


def _check_batch(spec, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] != spec.in_dim:
        raise StructureError(f"inputs have shape {X.shape}, model expects (n, {spec.in_dim})")
    if y.shape != (X.shape[0],) or X.shape[0] == 0:
        raise StructureError("labels must be a nonempty vector matching the inputs")
    if y.min() < 0 or y.max() >= spec.classes:
        raise StructureError("label out of range")
    return X, y.astype(np.intp)


def loss_and_grad(spec, W, batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch = (inputs, labels)`` and its exact gradient."""
    X, y = _check_batch(spec, *batch)
    loss, grad = spec.loss_and_grad(W, X, y)
    return float(loss), grad


def logits(spec, W, X) -> np.ndarray:
    return spec.logits(W, np.asarray(X, dtype=float))


def full_gradient(spec, W, dataset, chunk: int = 4096) -> np.ndarray:
    """Exact mean gradient over a whole dataset (no augmentation).

    Chunks are combined in a fixed order, weighted by their size.
    """
    return full_loss_and_grad(spec, W, dataset, chunk)[1]


def full_loss_and_grad(spec, W, dataset, chunk: int = 4096):
    X, y = dataset.inputs, dataset.labels
    n = X.shape[0]
    total_loss = 0.0
    total = np.zeros(dim(spec))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        loss, g = loss_and_grad(spec, W, (X[lo:hi], y[lo:hi]))
        total_loss += loss * (hi - lo)
        total += g * (hi - lo)
    return total_loss / n, total / n


def init_params(spec, rng: np.random.Generator) -> ParamVector:
    """Uniform in ``[-a, a]`` with ``a = 1 / sqrt(fan_in)`` for every layer."""
    layout = spec.layout
    values = np.empty(layout[-1].stop)
    for w_slot, b_slot in zip(layout[::2], layout[1::2]):
        fan_in = int(np.prod(w_slot.shape[1:]))
        a = 1.0 / math.sqrt(fan_in)
        values[w_slot.start:w_slot.stop] = rng.uniform(-a, a, w_slot.size)
        values[b_slot.start:b_slot.stop] = rng.uniform(-a, a, b_slot.size)
    return ParamVector(values, layout)


def zeros(spec) -> ParamVector:
    layout = spec.layout
    return ParamVector(np.zeros(layout[-1].stop), layout)


_FC_SCHEMES = ("column", "row")
_CONV_SCHEMES = ("channel", "filter", "kernel")


def _layer_groups(slot, scheme: str, kind: str):
    idx = np.arange(slot.start, slot.stop).reshape(slot.shape)
    if kind == "fc":
        if scheme == "column":
            return [idx[:, j] for j in range(idx.shape[1])]
        if scheme == "row":
            return [idx[i, :] for i in range(idx.shape[0])]
    else:
        if scheme == "channel":
            return [idx[:, j] for j in range(idx.shape[1])]
        if scheme == "filter":
            return [idx[i] for i in range(idx.shape[0])]
        if scheme == "kernel":
            return [idx[i, j] for i in range(idx.shape[0]) for j in range(idx.shape[1])]
    raise StructureError(f"grouping {scheme!r} does not apply to a {kind} layer")


def build_groups(spec, scheme) -> GroupPartition:
    """Group the weight tensors of ``spec``.

    ``scheme`` is either one name used for every weight layer, or a mapping
    from layer name (``"fc"``, ``"conv"``, ``"fc0"``...) or layer kind
    (``"fc"``/``"conv"``) to a name. Fully-connected layers accept
    ``column`` (one group per input neuron) and ``row``; conv layers accept
    ``channel``, ``filter`` and ``kernel``. Group weights are
    ``sqrt(group size)``.
    """
    groups = []
    slots = {s.name: s for s in spec.layout}
    for name, kind in spec.layers:
        if isinstance(scheme, str):
            chosen = scheme
        elif name in scheme:
            chosen = scheme[name]
        elif kind in scheme:
            chosen = scheme[kind]
        else:
            raise StructureError(f"no grouping given for layer {name!r}")
        groups += _layer_groups(slots[f"{name}.weight"], chosen, kind)
    return GroupPartition([g.ravel() for g in groups], dim=dim(spec))


def feature_groups(spec, feature_partition: GroupPartition) -> GroupPartition:
    """Lift a partition of input features onto a model's first weight layer.

    Group ``g`` collects every first-layer weight attached to the features in
    ``feature_partition.groups[g]`` (for a binary logistic model the
    parameter indices coincide with the feature indices). Weights carry over
    unchanged.
    """
    first = spec.layout[0]
    if len(first.shape) != 2:
        raise StructureError("feature groups need a fully-connected first layer")
    idx = np.arange(first.start, first.stop).reshape(first.shape)
    groups = [idx[:, np.asarray(g)].ravel() for g in feature_partition.groups]
    return GroupPartition(groups, feature_partition.weights, dim=dim(spec))


def describe(spec) -> dict:
    if isinstance(spec, LogisticRegression):
        return {"kind": "logistic", "in_dim": spec.in_dim, "classes": spec.classes}
    if isinstance(spec, Mlp):
        return {"kind": "mlp", "widths": list(spec.widths)}
    return {"kind": "convnet", "channels": spec.channels, "height": spec.height,
            "width": spec.width, "filters": spec.filters, "kh": spec.kh, "kw": spec.kw,
            "classes": spec.classes}


def from_description(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "logistic":
        return LogisticRegression(**d)
    if kind == "mlp":
        return Mlp(tuple(d["widths"]))
    if kind == "convnet":
        return TinyConvNet(**d)
    raise StructureError(f"unknown model kind {kind!r}")
