"""Reference solutions for the time-dependent 1D benchmarks.

Burgers uses the Cole-Hopf representation

    u(x, t) = - int sin(pi (x - eta)) F(x - eta) G(eta) deta / int F(x - eta) G(eta) deta

with F(y) = exp(-cos(pi y) / (2 pi nu)) and a Gaussian G of variance 2 nu t,
so substituting eta = sqrt(4 nu t) z turns both integrals into Gauss-Hermite
sums.  Allen-Cahn has no closed form and is integrated by the method of lines.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import jax.numpy as jnp
import numpy as np
from scipy.interpolate import CubicSpline

from pinnbench.errors import DomainError

BURGERS_NU = 0.01 / np.pi
ALLEN_CAHN_D = 0.001


def cache_dir() -> Path:
    root = os.environ.get("PINNBENCH_CACHE")
    path = Path(root) if root else Path.home() / ".cache" / "pinnbench"
    path.mkdir(parents=True, exist_ok=True)
    return path


class BurgersReference:
    def __init__(self, nu: float = BURGERS_NU, n_nodes: int = 200):
        self.nu = float(nu)
        self.n_nodes = int(n_nodes)
        self.z, self.w = np.polynomial.hermite.hermgauss(self.n_nodes)

    def __call__(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        x, t = np.broadcast_arrays(x, t)
        if np.any(t < 0) or np.any(np.abs(x) > 1):
            raise DomainError("Burgers reference is defined for |x| <= 1, t >= 0")
        shape = x.shape
        x = x.reshape(-1, 1)
        t = t.reshape(-1, 1)
        y = x - np.sqrt(4.0 * self.nu * t) * self.z[None, :]
        expo = -np.cos(np.pi * y) / (2.0 * np.pi * self.nu)
        expo -= expo.max(axis=1, keepdims=True)
        f = self.w[None, :] * np.exp(expo)
        u = -np.sum(np.sin(np.pi * y) * f, axis=1) / np.sum(f, axis=1)
        return u.reshape(shape)

    def field(self, X):
        """Differentiable version for points with t > 0; ``X`` columns are (x, t)."""
        z = jnp.asarray(self.z)
        w = jnp.asarray(self.w)
        x = X[:, :1]
        t = X[:, 1:2]
        y = x - jnp.sqrt(4.0 * self.nu * t) * z[None, :]
        expo = -jnp.cos(jnp.pi * y) / (2.0 * jnp.pi * self.nu)
        expo = expo - jnp.max(expo, axis=1, keepdims=True)
        f = w[None, :] * jnp.exp(expo)
        return -jnp.sum(jnp.sin(jnp.pi * y) * f, axis=1, keepdims=True) / jnp.sum(f, axis=1, keepdims=True)

    def table(self, nx: int = 256, nt: int = 101):
        xs = np.linspace(-1.0, 1.0, nx)
        ts = np.linspace(0.0, 1.0, nt)
        return xs, ts, self(xs[None, :], ts[:, None])


def allen_cahn_rhs(u: np.ndarray, dx: float, d: float) -> np.ndarray:
    # Dirichlet end values are held fixed
    out = np.zeros_like(u)
    out[1:-1] = d * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2 + 5.0 * (u[1:-1] - u[1:-1] ** 3)
    return out


def solve_allen_cahn(
    n_nodes: int = 512,
    dt: float = 1e-4,
    d: float = ALLEN_CAHN_D,
    t_final: float = 1.0,
    n_slices: int = 201,
):
    """Second-order central differences in x, classical RK4 in t.

    Returns (x nodes, slice times, slices) with slices shaped (n_slices, n_nodes).
    """
    x = np.linspace(-1.0, 1.0, n_nodes)
    dx = x[1] - x[0]
    u = x**2 * np.cos(np.pi * x)
    u[0] = u[-1] = -1.0
    n_steps = int(round(t_final / dt))
    if not np.isclose(n_steps * dt, t_final):
        raise ValueError("t_final must be a multiple of dt")
    stride, rem = divmod(n_steps, n_slices - 1)
    if rem:
        raise ValueError("number of steps must be divisible by n_slices - 1")
    slices = [u.copy()]
    for step in range(1, n_steps + 1):
        k1 = allen_cahn_rhs(u, dx, d)
        k2 = allen_cahn_rhs(u + 0.5 * dt * k1, dx, d)
        k3 = allen_cahn_rhs(u + 0.5 * dt * k2, dx, d)
        k4 = allen_cahn_rhs(u + dt * k3, dx, d)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % stride == 0:
            slices.append(u.copy())
    ts = np.linspace(0.0, t_final, n_slices)
    return x, ts, np.asarray(slices)


class AllenCahnReference:
    """Tabulated method-of-lines solution, interpolated cubically in x and linearly in t."""

    def __init__(self, n_nodes: int = 512, dt: float = 1e-4, d: float = ALLEN_CAHN_D,
                 n_slices: int = 201, use_cache: bool = True):
        self.params = dict(n_nodes=int(n_nodes), dt=float(dt), d=float(d), n_slices=int(n_slices))
        self.x, self.ts, self.slices = self._load(use_cache)
        self._spline = CubicSpline(self.x, self.slices, axis=1)

    def cache_key(self) -> str:
        p = self.params
        tag = f"allen_cahn_nx{p['n_nodes']}_dt{p['dt']:.3e}_d{p['d']:.6g}_ns{p['n_slices']}"
        return tag + "_" + hashlib.sha1(tag.encode()).hexdigest()[:8] + ".npz"

    def _load(self, use_cache):
        path = cache_dir() / self.cache_key() if use_cache else None
        if path is not None and path.exists():
            with np.load(path) as data:
                return data["x"], data["t"], data["u"]
        x, ts, slices = solve_allen_cahn(**self.params)
        if path is not None:
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, x=x, t=ts, u=slices)
            os.replace(tmp, path)
        return x, ts, slices

    def __call__(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        x, t = np.broadcast_arrays(x, t)
        if np.any(np.abs(x) > 1) or np.any(t < 0) or np.any(t > self.ts[-1]):
            raise DomainError("Allen-Cahn reference is defined on [-1, 1] x [0, 1]")
        shape = x.shape
        x = x.reshape(-1)
        t = t.reshape(-1)
        at_x = self._spline(x)  # (n_slices, n)
        pos = t / (self.ts[1] - self.ts[0])
        i0 = np.clip(np.floor(pos).astype(int), 0, len(self.ts) - 2)
        frac = pos - i0
        cols = np.arange(x.size)
        u = (1.0 - frac) * at_x[i0, cols] + frac * at_x[i0 + 1, cols]
        return u.reshape(shape)
