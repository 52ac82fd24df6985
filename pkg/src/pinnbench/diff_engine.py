"""Input derivatives of scalar fields and parameter/input gradients built on them.

Input derivatives (value, gradient, Hessian entries) are propagated forward as
truncated Taylor jets.  Fields that know how to push jets through themselves
(the MLP) expose a ``jets`` method; any other field falls back to nested
forward-mode differentiation.  Gradients with respect to parameters, and the
third-order input gradient of the squared residual, are obtained by reverse
accumulation over the jet computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from pinnbench.errors import ConfigError, NumericError

Pair = tuple[int, int]


def all_pairs(d: int) -> tuple[Pair, ...]:
    return tuple((i, j) for i in range(d) for j in range(i, d))


def _key(i: int, j: int) -> Pair:
    return (i, j) if i <= j else (j, i)


class JetBatch:
    """Jets of every network output at a batch of points.

    ``value`` has shape (N, m), ``grad`` has shape (N, m, d) and ``second``
    maps an ordered index pair (i <= j) to the (N, m) array of mixed second
    derivatives.  Only the pairs that were requested are present.
    """

    def __init__(self, value, grad, second):
        self.value = value
        self.grad = grad
        self.second = dict(second)

    @property
    def n_points(self) -> int:
        return self.value.shape[0]

    @property
    def input_dim(self) -> int:
        return self.grad.shape[2]

    def u(self, k: int = 0):
        return self.value[:, k]

    def d(self, k: int, i: int):
        return self.grad[:, k, i]

    def dd(self, k: int, i: int, j: int):
        try:
            return self.second[_key(i, j)][:, k]
        except KeyError:
            raise KeyError(
                f"second derivative ({i},{j}) was not propagated; "
                f"available pairs: {sorted(self.second)}"
            ) from None

    def hess(self):
        d = self.input_dim
        missing = [p for p in all_pairs(d) if p not in self.second]
        if missing:
            raise KeyError(f"Hessian incomplete, missing pairs {missing}")
        rows = []
        for i in range(d):
            rows.append(jnp.stack([self.second[_key(i, j)] for j in range(d)], axis=-1))
        return jnp.stack(rows, axis=-2)


@dataclass(frozen=True)
class Jet2:
    """Value, input gradient and input Hessian of one output at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


class DifferentiableField(Protocol):
    input_dim: int
    output_dim: int
    n_inverse: int

    def __call__(self, X, theta): ...

    def inverse_scalars(self, theta): ...


class AnalyticField:
    """Closed-form field ``fn(X) -> (N, m)`` written with ``jax.numpy``.

    ``theta`` carries only inverse-problem scalars (possibly none); the field
    itself has no trainable parameters.
    """

    def __init__(self, fn: Callable, input_dim: int, output_dim: int = 1, n_inverse: int = 0):
        self.fn = fn
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.n_inverse = n_inverse

    def __call__(self, X, theta=None):
        out = self.fn(X)
        if out.ndim == 1:
            out = out[:, None]
        return out

    def inverse_scalars(self, theta):
        if self.n_inverse == 0:
            return jnp.zeros(0)
        return jnp.asarray(theta)[-self.n_inverse:]


def _check_points(field, X):
    X = jnp.asarray(X)
    if not jnp.issubdtype(X.dtype, jnp.floating):
        X = X.astype(jnp.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != field.input_dim:
        raise ConfigError(
            f"points have shape {tuple(X.shape)}, field expects input_dim={field.input_dim}"
        )
    return X


def _generic_jets(field, X, theta, pairs) -> JetBatch:
    def f(x):
        return field(x[None, :], theta)[0]

    value = field(X, theta)
    grad = jax.vmap(jax.jacfwd(f))(X)
    second = {}
    if pairs:
        hess = jax.vmap(jax.jacfwd(jax.jacfwd(f)))(X)
        for i, j in pairs:
            second[(i, j)] = hess[:, :, i, j]
    return JetBatch(value, grad, second)


def jet_batch(field, X, theta, pairs: Sequence[Pair] | None = None) -> JetBatch:
    """Jets of ``field`` at the rows of ``X``.

    ``pairs`` selects which second derivatives to propagate (default: all).
    Traceable, so it may be used inside ``jax.jit`` and ``jax.grad``.
    """
    X = _check_points(field, X)
    d = field.input_dim
    pairs = all_pairs(d) if pairs is None else tuple(_key(i, j) for i, j in pairs)
    for i, j in pairs:
        if not (0 <= i < d and 0 <= j < d):
            raise ConfigError(f"derivative pair {(i, j)} out of range for d={d}")
    if hasattr(field, "jets"):
        return field.jets(X, theta, pairs)
    return _generic_jets(field, X, theta, pairs)


def eval_jet2(field, p, theta) -> list[Jet2]:
    """Exact value, gradient and Hessian of every output of ``field`` at ``p``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ConfigError("eval_jet2 takes a single point")
    jb = jet_batch(field, p, theta)
    hess = np.asarray(jb.hess())
    value = np.asarray(jb.value)
    grad = np.asarray(jb.grad)
    return [
        Jet2(float(value[0, k]), grad[0, k].copy(), hess[0, k].copy())
        for k in range(field.output_dim)
    ]


def param_gradient(loss: Callable, theta, *, iteration=None) -> np.ndarray:
    """dLoss/dtheta by reverse accumulation."""
    value, grad = jax.value_and_grad(loss)(jnp.asarray(theta, dtype=jnp.float64))
    value = float(value)
    if not np.isfinite(value):
        where = "" if iteration is None else f" at iteration {iteration}"
        raise NumericError(f"non-finite loss {value}{where}", iteration=iteration)
    return np.asarray(grad)


def residuals(problem, field, X, theta):
    """Residual array (N, n_res) of ``problem`` for ``field`` at ``X``."""
    X = _check_points(field, X)
    jb = jet_batch(field, X, theta, problem.second_order)
    return problem.residual(X, jb, field.inverse_scalars(theta))


def sq_residual(problem, field, X, theta):
    """Squared residual per point, summed over residual components."""
    r = residuals(problem, field, X, theta)
    return jnp.sum(r * r, axis=1)


def sq_residual_grad(problem, field, X, theta):
    """Gradient of the squared residual with respect to each point's coordinates.

    Points do not interact, so the gradient of the batch sum gives every
    per-point gradient in one reverse sweep.
    """
    X = _check_points(field, X)
    return jax.grad(lambda Y: jnp.sum(sq_residual(problem, field, Y, theta)))(X)


def check_finite_rows(G, X=None, what="gradient"):
    G = np.asarray(G)
    bad = np.flatnonzero(~np.all(np.isfinite(G), axis=1))
    if bad.size:
        loc = "" if X is None else f" at {np.asarray(X)[bad[0]].tolist()}"
        raise NumericError(
            f"non-finite {what} for {bad.size} point(s), first is #{bad[0]}{loc}",
            point_ids=bad.tolist(),
        )
    return G


def input_gradient_sq_residual(problem, field, p, theta) -> np.ndarray:
    """Gradient of r^2 at a single point with respect to its coordinates."""
    p = np.asarray(p, dtype=np.float64)
    G = np.asarray(sq_residual_grad(problem, field, p[None, :], theta))
    return check_finite_rows(G, p[None, :])[0]
