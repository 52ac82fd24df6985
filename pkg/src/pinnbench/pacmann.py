"""Gradient-driven movement of collocation points toward large squared residual.

Training is paused during a movement event.  Every collocation point takes
``steps`` optimizer steps uphill on r^2 (or one golden-section line search of
``steps`` interval shrinks along its initial gradient).  A point that leaves
the domain is immediately replaced by a uniform draw and sits out the rest of
the event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import jax
import numpy as np

from pinnbench import diff_engine
from pinnbench.errors import ConfigError, NumericError
from pinnbench.samplers import CollocationSet, _rng

OPTIMIZERS = ("gradient_ascent", "nonlinear_ga", "rmsprop", "momentum", "adam", "golden_section")

PHI = (1.0 + math.sqrt(5.0)) / 2.0
GOLDEN_LO = 1.0 - 1.0 / PHI
GOLDEN_HI = 1.0 / PHI


@dataclass(frozen=True)
class PacmannConfig:
    optimizer: str = "adam"
    stepsize: float = 1e-5
    steps: int = 5
    period: int = 50
    rmsprop_beta: float = 0.999
    momentum_beta: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown point optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if not self.stepsize >= 0:
            raise ConfigError("stepsize must be >= 0")
        if self.steps < 0 or self.period < 1:
            raise ConfigError("need steps >= 0 and period >= 1")


@dataclass
class PointOptimizerState:
    V: np.ndarray
    S: np.ndarray
    step: int = 0
    flagged: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, n: int, d: int) -> "PointOptimizerState":
        return cls(np.zeros((n, d)), np.zeros((n, d)), 0, np.zeros(n, dtype=bool))

    def is_clean(self) -> bool:
        return self.step == 0 and not self.V.any() and not self.S.any() and not self.flagged.any()


def inner_step(kind: str, x, g, state: PointOptimizerState, cfg: PacmannConfig, active=None) -> np.ndarray:
    """One ascent step for every active row of ``x`` given gradients ``g``.

    Rows whose gradient is not finite stay where they are and are flagged in
    ``state``.  Optimizer buffers of inactive rows are left untouched.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = x.shape[0]
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    finite = np.all(np.isfinite(g), axis=1)
    state.flagged |= active & ~finite
    rows = active & finite
    g = np.where(rows[:, None], g, 0.0)
    s = cfg.stepsize
    i = state.step + 1

    if kind == "gradient_ascent":
        delta = s * g
    elif kind == "nonlinear_ga":
        delta = s * np.tanh(g)
    elif kind == "rmsprop":
        b = cfg.rmsprop_beta
        state.S = np.where(rows[:, None], b * state.S + (1.0 - b) * g * g, state.S)
        delta = s * g / np.sqrt(state.S + cfg.eps)
    elif kind == "momentum":
        b = cfg.momentum_beta
        state.V = np.where(rows[:, None], b * state.V + (1.0 - b) * g, state.V)
        delta = s * state.V
    elif kind == "adam":
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        state.V = np.where(rows[:, None], b1 * state.V + (1.0 - b1) * g, state.V)
        state.S = np.where(rows[:, None], b2 * state.S + (1.0 - b2) * g * g, state.S)
        v_hat = state.V / (1.0 - b1**i)
        s_hat = state.S / (1.0 - b2**i)
        delta = s * v_hat / np.sqrt(s_hat + cfg.eps)
    else:
        raise ConfigError(f"{kind!r} is not a stepwise point optimizer")

    state.step = i
    return np.where(rows[:, None], x + delta, x)


def golden_section_bracket(x, g, f, s: float, T: int):
    """Final bracket (a, b) of ``T`` golden-section shrinks along x + xi * s * g.

    Vectorized over rows; ``f`` maps (M, d) points to (M,) values and is
    maximized.  Each shrink reuses one interior value, so only one new
    evaluation per row is needed per iteration.  Ties move the bracket right.
    """
    if T < 1:
        raise ConfigError("golden-section search needs T >= 1")
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    a = x.copy()
    b = x + s * g
    xl = a + GOLDEN_LO * (b - a)
    xr = a + GOLDEN_HI * (b - a)
    fl = np.asarray(f(xl), dtype=np.float64)
    fr = np.asarray(f(xr), dtype=np.float64)
    for it in range(T):
        left = (fl > fr)[:, None]
        keep = np.where(left, xl, xr)
        keep_f = np.where(left[:, 0], fl, fr)
        a, b = np.where(left, a, xl), np.where(left, xr, b)
        if it == T - 1:
            break
        probe = np.where(left, a + GOLDEN_LO * (b - a), a + GOLDEN_HI * (b - a))
        fp = np.asarray(f(probe), dtype=np.float64)
        xl = np.where(left, probe, keep)
        xr = np.where(left, keep, probe)
        fl = np.where(left[:, 0], fp, keep_f)
        fr = np.where(left[:, 0], keep_f, fp)
    return a, b


def golden_section_move(x, g, f, s: float, T: int) -> np.ndarray:
    """Midpoint of the final golden-section bracket; zero-gradient rows stay put."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    a, b = golden_section_bracket(x, g, f, s, T)
    out = 0.5 * (a + b)
    zero = ~np.any(g != 0.0, axis=1)
    out[zero] = x[zero]
    return out


@dataclass
class MoveReport:
    n_replaced: int
    n_flagged: int
    state: PointOptimizerState


def move_points(cset: CollocationSet, box, cfg: PacmannConfig, grad_fn, value_fn, rng) -> tuple[CollocationSet, MoveReport]:
    """Run one movement event given r^2 gradient/value callables over (N, d) arrays."""
    rng = _rng(rng)
    X = cset.points.copy()
    origin = cset.origin.copy()
    n, d = X.shape
    state = PointOptimizerState.zeros(n, d)
    assert state.is_clean()
    frozen = np.zeros(n, dtype=bool)

    def replace_escaped(newX, movable):
        out = movable & ~box.contains(newX)
        k = int(out.sum())
        if k:
            newX[out] = box.sample(k, rng)
            origin[out] = "replaced"
            frozen[out] = True
        return newX

    if cfg.steps > 0 and cfg.stepsize != 0:
        if cfg.optimizer == "golden_section":
            G = np.asarray(grad_fn(X))
            bad = ~np.all(np.isfinite(G), axis=1)
            state.flagged |= bad
            G[bad] = 0.0
            X = replace_escaped(golden_section_move(X, G, value_fn, cfg.stepsize, cfg.steps), ~bad)
        else:
            for _ in range(cfg.steps):
                active = ~frozen
                if not active.any():
                    break
                G = np.asarray(grad_fn(X))
                newX = inner_step(cfg.optimizer, X, G, state, cfg, active)
                X = replace_escaped(newX, active)

    if state.flagged.any():
        ids = np.flatnonzero(state.flagged)
        raise NumericError(
            f"non-finite residual gradient at {ids.size} collocation point(s), first #{ids[0]} "
            f"at {cset.points[ids[0]].tolist()}",
            point_ids=ids.tolist(),
        )
    out = CollocationSet(X, origin)
    return out, MoveReport(int(frozen.sum()), 0, state)


def pacmann_move(cset: CollocationSet, problem, field, theta, cfg: PacmannConfig, seed) -> CollocationSet:
    """Move ``cset`` for a frozen ``theta``; see :func:`move_points`."""

    @jax.jit
    def grad_fn(X):
        return diff_engine.sq_residual_grad(problem, field, X, theta)

    @jax.jit
    def value_fn(X):
        return diff_engine.sq_residual(problem, field, X, theta)

    out, _ = move_points(cset, problem.box, cfg, grad_fn, value_fn, seed)
    return out
