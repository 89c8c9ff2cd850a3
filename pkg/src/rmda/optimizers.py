"""RMDA and the baselines it is compared with.

States are small dataclasses and every step function returns a new state,
so a trajectory can be replayed or branched freely. Gradients are supplied
by the caller; nothing here touches data.

The step counter ``t`` inside :class:`RmdaState` counts minibatches since
the last restart, whereas the schedules take the global epoch index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Schedule, as_array
from .regularizers import NoRegularizer, prox


class NumericError(FloatingPointError):
    pass


def _check_grad(grad: np.ndarray, dim: int) -> np.ndarray:
    g = as_array(grad)
    if g.shape != (dim,):
        raise ValueError(f"gradient has shape {g.shape}, expected ({dim},)")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient; step rejected")
    return g


@dataclass(frozen=True, eq=False)
class RmdaState:
    """Running quantities of regularized modernized dual averaging.

    ``W_prev`` is the iterate the latest gradient was evaluated at, kept so
    the variance-reduction diagnostic can compare ``V / alpha`` against the
    full gradient there. ``alpha`` is accumulated with Neumaier compensation
    (``alpha_err`` holds the running correction).
    """

    W: np.ndarray
    Wtilde: np.ndarray
    V: np.ndarray
    alpha: float
    t: int
    W0: np.ndarray
    reg: object
    eta: Schedule
    c: Schedule
    W_prev: np.ndarray | None = None
    alpha_err: float = 0.0
    total_steps: int = 0

    @property
    def alpha_total(self) -> float:
        return self.alpha + self.alpha_err


def rmda_init(W0, reg=None, eta: Schedule | None = None, c: Schedule | None = None) -> RmdaState:
    W0 = as_array(W0).copy()
    return RmdaState(
        W=W0.copy(), Wtilde=W0.copy(), V=np.zeros_like(W0), alpha=0.0, t=0, W0=W0,
        reg=reg if reg is not None else NoRegularizer(),
        eta=eta if eta is not None else Schedule("constant", 0.1),
        c=c if c is not None else Schedule("constant", 1.0),
    )


def _neumaier(total: float, err: float, x: float) -> tuple[float, float]:
    s = total + x
    if abs(total) >= abs(x):
        err += (total - s) + x
    else:
        err += (x - s) + total
    return s, err


def rmda_step(state: RmdaState, grad, epoch: int, *, c_override: float | None = None) -> RmdaState:
    """One RMDA iteration with the gradient taken at ``state.W``.

    t <- t + 1, s = eta(epoch) sqrt(t), alpha <- alpha + s, V <- V + s grad,
    Wtilde <- prox_{alpha / sqrt(t)} (W0 - V / sqrt(t)), and finally
    W <- (1 - c) W + c Wtilde with c = c(epoch).
    """
    g = _check_grad(grad, state.W.size)
    t = state.t + 1
    b = math.sqrt(t)
    s = state.eta(epoch) * b
    alpha, alpha_err = _neumaier(state.alpha, state.alpha_err, s)
    V = state.V + s * g
    Wtilde = prox(state.reg, state.W0 - V / b, (alpha + alpha_err) / b)
    c = state.c(epoch) if c_override is None else c_override
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"momentum parameter c = {c} outside [0, 1]")
    W = (1.0 - c) * state.W + c * Wtilde
    if not np.all(np.isfinite(W)):
        raise NumericError("iterate became non-finite")
    return replace(state, W=W, Wtilde=Wtilde, V=V, alpha=alpha, alpha_err=alpha_err, t=t,
                   W_prev=state.W, total_steps=state.total_steps + 1)


def rda_step(state: RmdaState, grad, epoch: int) -> RmdaState:
    """Classical regularized dual averaging: RMDA with c fixed at 1."""
    return rmda_step(state, grad, epoch, c_override=1.0)


def restart(state: RmdaState) -> RmdaState:
    """Start a new round from the current iterate.

    The anchor moves to ``W``; ``V``, ``alpha`` and ``t`` return to zero.
    The schedules are untouched and keep reading the global epoch.
    """
    W = state.W.copy()
    return replace(state, W=W, Wtilde=W.copy(), W0=W.copy(), V=np.zeros_like(W),
                   alpha=0.0, alpha_err=0.0, t=0, W_prev=None)


@dataclass(frozen=True, eq=False)
class MsgdState:
    """Heavy-ball momentum SGD, optionally followed by a prox step."""

    W: np.ndarray
    m: np.ndarray
    mu: float
    eta: Schedule
    reg: object
    W_prev: np.ndarray | None = None
    total_steps: int = 0

    def __post_init__(self):
        if self.m.shape != self.W.shape:
            raise ValueError("momentum buffer and iterate differ in shape")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError("mu must lie in [0, 1)")


def msgd_init(W0, mu: float = 0.0, eta: Schedule | None = None, reg=None) -> MsgdState:
    W0 = as_array(W0).copy()
    return MsgdState(W=W0, m=np.zeros_like(W0), mu=mu,
                     eta=eta if eta is not None else Schedule("constant", 0.1),
                     reg=reg if reg is not None else NoRegularizer())


def proxmsgd_step(state: MsgdState, grad, epoch: int) -> MsgdState:
    """m <- mu m + grad; W <- prox_{eta}(W - eta m) with eta = eta(epoch)."""
    g = _check_grad(grad, state.W.size)
    eta = state.eta(epoch)
    m = state.mu * state.m + g
    W = prox(state.reg, state.W - eta * m, eta)
    if not np.all(np.isfinite(W)):
        raise NumericError("iterate became non-finite")
    return replace(state, W=W, m=m, W_prev=state.W, total_steps=state.total_steps + 1)


def msgd_step(state: MsgdState, grad, epoch: int) -> MsgdState:
    """Dense momentum SGD; ignores any regularizer on the state."""
    g = _check_grad(grad, state.W.size)
    m = state.mu * state.m + g
    W = state.W - state.eta(epoch) * m
    if not np.all(np.isfinite(W)):
        raise NumericError("iterate became non-finite")
    return replace(state, W=W, m=m, W_prev=state.W, total_steps=state.total_steps + 1)
