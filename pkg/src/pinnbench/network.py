"""Fully connected tanh network over a flat parameter vector.

Parameter layout: for each layer the weight matrix (fan_in x fan_out,
row-major) followed by its bias, then an optional tail of inverse-problem
scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from pinnbench.diff_engine import JetBatch, all_pairs, eval_jet2
from pinnbench.errors import ConfigError


@jax.custom_jvp
def tanh(z):
    # exp-based form; XLA's float64 tanh is an order of magnitude slower on CPU
    e = jnp.exp(-2.0 * jnp.abs(z))
    return jnp.sign(z) * (1.0 - e) / (1.0 + e)


@tanh.defjvp
def _tanh_jvp(primals, tangents):
    (z,), (dz,) = primals, tangents
    a = tanh(z)
    return a, (1.0 - a * a) * dz


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...]
    n_inverse: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.activation != "tanh":
            raise ConfigError("only the tanh activation is supported")
        if not 2 <= self.input_dim <= 5:
            raise ConfigError(f"input_dim must be in 2..5, got {self.input_dim}")
        if self.output_dim not in (1, 3):
            raise ConfigError(f"output_dim must be 1 or 3, got {self.output_dim}")
        if any(w < 1 for w in self.hidden):
            raise ConfigError(f"hidden widths must be >= 1, got {self.hidden}")
        if self.n_inverse < 0:
            raise ConfigError("n_inverse must be >= 0")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_network_params(self) -> int:
        w = self.widths
        return sum(w[l - 1] * w[l] + w[l] for l in range(1, len(w)))

    @property
    def n_params(self) -> int:
        return self.n_network_params + self.n_inverse

    def header(self) -> str:
        return " ".join(
            ["mlp", str(self.input_dim), str(self.output_dim), *map(str, self.hidden), str(self.n_inverse)]
        )


def _layer_slices(cfg: MLPConfig):
    out, pos = [], 0
    w = cfg.widths
    for l in range(1, len(w)):
        nw = w[l - 1] * w[l]
        out.append(((pos, pos + nw), (pos + nw, pos + nw + w[l]), (w[l - 1], w[l])))
        pos += nw + w[l]
    return out


def unflatten(cfg: MLPConfig, theta):
    theta = jnp.asarray(theta)
    if theta.shape != (cfg.n_params,):
        raise ConfigError(f"theta has shape {theta.shape}, expected ({cfg.n_params},)")
    layers = []
    for (w0, w1), (b0, b1), shape in _layer_slices(cfg):
        layers.append((theta[w0:w1].reshape(shape), theta[b0:b1]))
    return layers


def init_glorot(cfg: MLPConfig, seed: int, inverse_init=None) -> np.ndarray:
    """Glorot-uniform weights, zero biases; inverse scalars default to zero."""
    rng = np.random.default_rng(seed)
    parts = []
    w = cfg.widths
    for l in range(1, len(w)):
        a = math.sqrt(6.0 / (w[l - 1] + w[l]))
        parts.append(rng.uniform(-a, a, size=w[l - 1] * w[l]))
        parts.append(np.zeros(w[l]))
    if cfg.n_inverse:
        tail = np.zeros(cfg.n_inverse) if inverse_init is None else np.asarray(inverse_init, float)
        if tail.shape != (cfg.n_inverse,):
            raise ConfigError("inverse_init has the wrong length")
        parts.append(tail)
    return np.concatenate(parts)


class MLP:
    """tanh MLP as a differentiable field over flat parameters."""

    def __init__(self, cfg: MLPConfig):
        self.cfg = cfg
        self.input_dim = cfg.input_dim
        self.output_dim = cfg.output_dim
        self.n_inverse = cfg.n_inverse

    def __call__(self, X, theta):
        layers = unflatten(self.cfg, theta)
        a = jnp.asarray(X)
        for W, b in layers[:-1]:
            a = tanh(a @ W + b)
        W, b = layers[-1]
        return a @ W + b

    def inverse_scalars(self, theta):
        if self.n_inverse == 0:
            return jnp.zeros(0)
        return jnp.asarray(theta)[self.cfg.n_network_params:]

    def jets(self, X, theta, pairs=None) -> JetBatch:
        """Push value, first and selected second derivatives through the layers.

        Channels are stacked row-wise as a (C*N, width) block: value, one
        channel per input direction, one per requested pair.  Each layer is
        then a single 2-D matmul; the tanh nonlinearity maps channels by

            a = tanh(z),  a_i = s1 z_i,  a_ij = s1 z_ij + s2 z_i z_j

        with s1 = 1 - a^2 and s2 = -2 a s1.
        """
        d = self.input_dim
        pairs = all_pairs(d) if pairs is None else tuple(pairs)
        layers = unflatten(self.cfg, theta)
        X = jnp.asarray(X)
        n = X.shape[0]

        W, b = layers[0]
        z = X @ W + b
        if len(layers) == 1:
            zeros = jnp.zeros_like(z)
            grad = jnp.stack([jnp.broadcast_to(W[i], z.shape) for i in range(d)], axis=-1)
            return JetBatch(z, grad, {p: zeros for p in pairs})
        a = tanh(z)
        s1 = 1.0 - a * a
        s2 = -2.0 * a * s1
        S = jnp.concatenate([a] + [s1 * W[i] for i in range(d)] + [s2 * (W[i] * W[j]) for i, j in pairs])

        def chan(Z, c):
            return Z[c * n : (c + 1) * n]

        for W, b in layers[1:-1]:
            Z = S @ W
            a = tanh(chan(Z, 0) + b)
            s1 = 1.0 - a * a
            s2 = -2.0 * a * s1
            zi = [chan(Z, 1 + i) for i in range(d)]
            second = [s1 * chan(Z, 1 + d + k) + s2 * zi[i] * zi[j] for k, (i, j) in enumerate(pairs)]
            S = jnp.concatenate([a] + [s1 * z for z in zi] + second)

        W, b = layers[-1]
        Z = S @ W
        value = chan(Z, 0) + b
        grad = jnp.stack([chan(Z, 1 + i) for i in range(d)], axis=-1)
        second = {p: chan(Z, 1 + d + k) for k, p in enumerate(pairs)}
        assert value.shape == (n, self.output_dim)
        return JetBatch(value, grad, second)


def forward(cfg: MLPConfig, theta, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    X = p[None, :] if single else p
    if X.shape[1] != cfg.input_dim:
        raise ConfigError(f"point dimension {X.shape[1]} != input_dim {cfg.input_dim}")
    out = np.asarray(MLP(cfg)(X, theta))
    return out[0] if single else out


def forward_jet2(cfg: MLPConfig, theta, p):
    return eval_jet2(MLP(cfg), p, theta)


def save_checkpoint(path, cfg: MLPConfig, theta) -> None:
    theta = np.asarray(theta, dtype="<f8")
    if theta.shape != (cfg.n_params,):
        raise ConfigError("theta does not match the network configuration")
    with open(path, "wb") as fh:
        fh.write((cfg.header() + "\n").encode("ascii"))
        fh.write(theta.tobytes())


def load_checkpoint(path) -> tuple[MLPConfig, np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    fields = raw[:nl].decode("ascii").split()
    if len(fields) < 4 or fields[0] != "mlp":
        raise ConfigError(f"{path}: not a parameter checkpoint")
    nums = [int(f) for f in fields[1:]]
    cfg = MLPConfig(nums[0], nums[1], tuple(nums[2:-1]), n_inverse=nums[-1])
    theta = np.frombuffer(raw[nl + 1 :], dtype="<f8").astype(np.float64)
    if theta.shape != (cfg.n_params,):
        raise ConfigError(f"{path}: payload has {theta.size} values, header implies {cfg.n_params}")
    return cfg, theta
