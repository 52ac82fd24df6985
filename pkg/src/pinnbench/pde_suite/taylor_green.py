"""Manufactured Taylor-Green vortex data for the inverse Navier-Stokes problem."""

from __future__ import annotations

import csv
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from pinnbench.errors import ConfigError
from pinnbench.pde_suite.domain import DomainBox

NS_BOX = DomainBox([1.0, -2.0, 0.0], [8.0, 2.0, 7.0])  # (x, y, t)
TG_NU = 0.01
OBS_COLUMNS = ("t", "x", "y", "u", "v", "p")


def taylor_green(x, y, t, nu=TG_NU, xp=np):
    decay = xp.exp(-2.0 * nu * t)
    u = -xp.cos(x) * xp.sin(y) * decay
    v = xp.sin(x) * xp.cos(y) * decay
    p = -0.25 * (xp.cos(2.0 * x) + xp.cos(2.0 * y)) * decay**2
    return u, v, p


def taylor_green_field(nu=TG_NU):
    """Closure mapping (N, 3) points (x, y, t) to (N, 3) outputs (u, v, p)."""

    def fn(X):
        u, v, p = taylor_green(X[:, 0], X[:, 1], X[:, 2], nu, xp=jnp)
        return jnp.stack([u, v, p], axis=1)

    return fn


def taylor_green_values(X, nu=TG_NU) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.stack(taylor_green(X[:, 0], X[:, 1], X[:, 2], nu), axis=1)


class ObservationSet:
    """Rows of (t, x, y, u, v, p)."""

    def __init__(self, rows):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != 6:
            raise ConfigError("observation rows must have 6 columns (t, x, y, u, v, p)")
        if not np.all(NS_BOX.contains(rows[:, [1, 2, 0]])):
            raise ConfigError("observation outside the Navier-Stokes box")
        self.rows = rows

    def __len__(self):
        return self.rows.shape[0]

    @property
    def points(self) -> np.ndarray:
        """Coordinates in network order (x, y, t)."""
        return self.rows[:, [1, 2, 0]]

    @property
    def values(self) -> np.ndarray:
        return self.rows[:, 3:6]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(OBS_COLUMNS)
            for row in self.rows:
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def read_csv(cls, path) -> "ObservationSet":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if tuple(header or ()) != OBS_COLUMNS:
                raise ConfigError(f"{path}: expected header {','.join(OBS_COLUMNS)}")
            rows = [[float(v) for v in line] for line in r if line]
        return cls(np.asarray(rows).reshape(-1, 6))


def gen_taylor_green(nu: float = TG_NU, n_rows: int = 7000, seed: int = 0) -> ObservationSet:
    rng = np.random.default_rng(seed)
    X = NS_BOX.sample(n_rows, rng)
    U = taylor_green_values(X, nu)
    rows = np.column_stack([X[:, 2], X[:, 0], X[:, 1], U])
    return ObservationSet(rows)


def write_observations(path, obs: ObservationSet) -> Path:
    obs.write_csv(path)
    return Path(path)
