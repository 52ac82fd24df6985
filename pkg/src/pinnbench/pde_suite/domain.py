from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pinnbench.errors import ConfigError


@dataclass(frozen=True, eq=False)
class DomainBox:
    """Axis-aligned box; the time coordinate, when present, is the last axis."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ConfigError(f"invalid box: lower={lo}, upper={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, X) -> np.ndarray:
        """Row mask of points inside the closed box."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U) * self.width

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.from_unit(rng.random((n, self.dim)))

    def __repr__(self):
        return f"DomainBox({self.lower.tolist()}, {self.upper.tolist()})"


def sample_faces(box: DomainBox, axes, n: int, rng: np.random.Generator, fixed=None) -> np.ndarray:
    """Uniform points on the faces of ``box`` normal to ``axes``.

    Faces are chosen with probability proportional to their area (over the
    free coordinates).  ``fixed`` maps an axis to a value that every point
    takes, e.g. ``{d - 1: 0.0}`` for an initial-time slice.
    """
    fixed = dict(fixed or {})
    X = box.sample(n, rng)
    for ax, val in fixed.items():
        X[:, ax] = val
    if not axes:
        return X
    free = [a for a in range(box.dim) if a not in fixed]
    areas = []
    for ax in axes:
        others = [a for a in free if a != ax]
        areas.append(float(np.prod(box.width[others])) if others else 1.0)
    probs = np.repeat(np.asarray(areas) / (2 * sum(areas)), 2)
    face = rng.choice(2 * len(axes), size=n, p=probs)
    for k, ax in enumerate(axes):
        lo = face == 2 * k
        hi = face == 2 * k + 1
        X[lo, ax] = box.lower[ax]
        X[hi, ax] = box.upper[ax]
    return X
