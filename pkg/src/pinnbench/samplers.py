"""Baseline collocation strategies and the shared point-cloud snapshot format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from pinnbench.errors import ConfigError
from pinnbench.pde_suite.domain import DomainBox

ORIGINS = ("initial", "added", "replaced")
SAMPLER_KINDS = ("uniform_grid", "hammersley", "random_resample", "rar", "rad", "rar_d", "pacmann")
STATIC_KINDS = ("uniform_grid", "hammersley")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class CollocationSet:
    points: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ConfigError("a collocation set needs at least one point")
        origin = np.asarray(self.origin, dtype="<U8")
        if origin.ndim == 0:
            origin = np.full(self.points.shape[0], str(origin), dtype="<U8")
        if origin.shape != (self.points.shape[0],):
            raise ConfigError("one origin tag per point is required")
        if not np.isin(origin, ORIGINS).all():
            raise ConfigError(f"origin tags must be in {ORIGINS}")
        self.origin = origin

    @classmethod
    def initial(cls, points) -> "CollocationSet":
        return cls(points, "initial")

    def __len__(self):
        return self.points.shape[0]

    def copy(self) -> "CollocationSet":
        return CollocationSet(self.points.copy(), self.origin.copy())

    def check(self, box: DomainBox) -> "CollocationSet":
        inside = box.contains(self.points)
        if not inside.all():
            bad = np.flatnonzero(~inside)
            raise AssertionError(f"{bad.size} collocation point(s) outside {box}, first #{bad[0]}")
        return self

    def extended(self, new_points, tag="added") -> "CollocationSet":
        new_points = np.asarray(new_points, dtype=np.float64).reshape(-1, self.points.shape[1])
        return CollocationSet(
            np.vstack([self.points, new_points]),
            np.concatenate([self.origin, np.full(len(new_points), tag, dtype="<U8")]),
        )


# --- static layouts ---------------------------------------------------------


def balanced_counts(n: int, d: int, max_ratio: float = 2.0) -> tuple[int, ...]:
    """Per-axis counts (>= 2 each) whose product is the largest grid size <= n.

    Only tuples with max/min <= ``max_ratio`` are considered ("balanced");
    among equal products the smallest max/min ratio wins.  Returned sorted
    in non-increasing order.
    """
    if n < 2**d:
        raise ConfigError(f"need at least {2**d} points for a {d}-D grid")
    best = None

    def rec(prefix, lo, prod):
        nonlocal best
        k = len(prefix)
        if k == d:
            key = (prod, -prefix[-1] / prefix[0])
            if best is None or key > best[0]:
                best = (key, tuple(prefix))
            return
        hi = int(max_ratio * prefix[0]) if prefix else n
        for c in range(lo, hi + 1):
            if prod * c ** (d - k) > n:
                break
            rec(prefix + [c], c, prod * c)

    rec([], 2, 1)
    return tuple(sorted(best[1], reverse=True))


def grid_axis_counts(n: int, box: DomainBox) -> tuple[int, ...]:
    counts = balanced_counts(n, box.dim)
    # larger counts go to wider axes; stable for equal widths
    order = np.argsort(-box.width, kind="stable")
    per_axis = [0] * box.dim
    for c, ax in zip(counts, order):
        per_axis[ax] = c
    return tuple(per_axis)


def uniform_grid(n: int, box: DomainBox) -> CollocationSet:
    counts = grid_axis_counts(n, box)
    axes = [np.linspace(box.lower[i], box.upper[i], c) for i, c in enumerate(counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return CollocationSet.initial(np.stack([m.reshape(-1) for m in mesh], axis=1))


@lru_cache(maxsize=None)
def _primes(k: int) -> tuple[int, ...]:
    out, c = [], 2
    while len(out) < k:
        if all(c % p for p in out if p * p <= c):
            out.append(c)
        c += 1
    return tuple(out)


def radical_inverse(i, base: int) -> np.ndarray:
    """Digit reversal of integer(s) ``i`` in ``base`` about the radix point."""
    i = np.asarray(i, dtype=np.int64).copy()
    out = np.zeros(i.shape, dtype=np.float64)
    f = 1.0 / base
    while np.any(i > 0):
        out += f * (i % base)
        i //= base
        f /= base
    return out


def hammersley_unit(n: int, d: int) -> np.ndarray:
    idx = np.arange(n)
    cols = [idx / n]
    for base in _primes(d - 1):
        cols.append(radical_inverse(idx, base))
    return np.stack(cols, axis=1)


def hammersley(n: int, box: DomainBox) -> CollocationSet:
    return CollocationSet.initial(box.from_unit(hammersley_unit(n, box.dim)))


def resample_random(n: int, box: DomainBox, seed) -> CollocationSet:
    return CollocationSet.initial(box.sample(n, _rng(seed)))


# --- residual-driven strategies --------------------------------------------


def rar_step(cset: CollocationSet, pool, residual_magnitudes, m: int) -> CollocationSet:
    """Append the ``m`` pool points with the largest |r| (ties: lowest index)."""
    if m <= 0:
        return cset.copy()
    r = np.abs(np.asarray(residual_magnitudes, dtype=np.float64).reshape(-1))
    order = np.argsort(-r, kind="stable")[:m]
    return cset.extended(np.asarray(pool)[order])


def rad_weights(residual_magnitudes, k: float = 1.0, c: float = 1.0) -> np.ndarray:
    rk = np.abs(np.asarray(residual_magnitudes, dtype=np.float64).reshape(-1)) ** k
    mean = rk.mean()
    base = rk / mean if mean > 0 else np.zeros_like(rk)
    return base + c


def weighted_sample_without_replacement(weights, n: int, rng) -> np.ndarray:
    """Indices of ``n`` draws without replacement, P proportional to weight.

    Exponential keys E_i / w_i: the n smallest keys are an exact weighted
    sample without replacement, ordered by draw.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.any(w > 0):
        raise ConfigError("sampling weights must be non-negative and not all zero")
    if n > np.count_nonzero(w):
        raise ConfigError("not enough points with positive weight")
    e = _rng(rng).standard_exponential(w.size)
    with np.errstate(divide="ignore"):
        keys = np.where(w > 0, e / w, np.inf)
    return np.argsort(keys, kind="stable")[:n]


def rad_resample(n: int, pool, residual_magnitudes, k: float = 1.0, c: float = 1.0, seed=None) -> CollocationSet:
    pool = np.asarray(pool, dtype=np.float64)
    if pool.shape[0] < n:
        raise ConfigError(f"RAD pool of {pool.shape[0]} points cannot supply {n} draws")
    idx = weighted_sample_without_replacement(rad_weights(residual_magnitudes, k, c), n, seed)
    return CollocationSet.initial(pool[idx])


def rard_step(cset: CollocationSet, pool, residual_magnitudes, m: int, k: float = 1.0,
              c: float = 1.0, seed=None) -> CollocationSet:
    if m <= 0:
        return cset.copy()
    pool = np.asarray(pool, dtype=np.float64)
    idx = weighted_sample_without_replacement(rad_weights(residual_magnitudes, k, c), m, seed)
    return cset.extended(pool[idx])


@dataclass(frozen=True)
class BaselineSamplerConfig:
    kind: str
    period: int = 50
    rar_add: int = 1
    rad_k: float = 1.0
    rad_c: float = 1.0
    pool_factor: int = 10

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS or self.kind == "pacmann":
            raise ConfigError(f"unknown baseline sampler {self.kind!r}")
        if self.period < 1 or self.rar_add < 1 or self.pool_factor < 10:
            raise ConfigError("need period >= 1, rar_add >= 1 and pool_factor >= 10")

    def pool_size(self, n_r: int) -> int:
        return self.pool_factor * n_r


# --- snapshot CSV -----------------------------------------------------------


def snapshot_header(d: int) -> list[str]:
    return ["iteration", "point_id", "origin"] + [f"c{i}" for i in range(d)]


def write_snapshot(fh, iteration: int, cset: CollocationSet, header: bool = False) -> None:
    w = csv.writer(fh, lineterminator="\n")
    d = cset.points.shape[1]
    if header:
        w.writerow(snapshot_header(d))
    for i, (p, o) in enumerate(zip(cset.points, cset.origin)):
        w.writerow([iteration, i, o] + [f"{v:.17g}" for v in p])


def read_snapshots(path) -> dict[int, CollocationSet]:
    """Read a snapshot CSV into {iteration: CollocationSet}, keeping file order."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:3] != ["iteration", "point_id", "origin"]:
            raise ConfigError(f"{path}: not a point snapshot file")
        d = len(header) - 3
        groups: dict[int, tuple[list, list]] = {}
        for row in r:
            if not row:
                continue
            it = int(row[0])
            pts, tags = groups.setdefault(it, ([], []))
            pts.append([float(v) for v in row[3 : 3 + d]])
            tags.append(row[2])
    return {it: CollocationSet(np.asarray(p), np.asarray(t)) for it, (p, t) in groups.items()}


def expected_events(adam_iters: int, period: int, blocks: int) -> int:
    return math.floor(adam_iters / period) * blocks
