"""Benchmark problem definitions: residual operators, conditions, references."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import jax.numpy as jnp
import numpy as np

from pinnbench.diff_engine import AnalyticField
from pinnbench.errors import ConfigError
from pinnbench.pde_suite.domain import DomainBox, sample_faces
from pinnbench.pde_suite.references import (
    ALLEN_CAHN_D,
    BURGERS_NU,
    AllenCahnReference,
    BurgersReference,
)
from pinnbench.pde_suite.taylor_green import (
    NS_BOX,
    TG_NU,
    ObservationSet,
    gen_taylor_green,
    taylor_green_field,
    taylor_green_values,
)


@dataclass(frozen=True)
class ProblemParams:
    nu: float = BURGERS_NU
    d_ac: float = ALLEN_CAHN_D
    lambda1: float = 1.0
    lambda2: float = TG_NU

    def __post_init__(self):
        if not self.nu > 0 or not self.d_ac > 0:
            raise ConfigError("nu and d_ac must be positive")


@dataclass(frozen=True)
class PointCounts:
    n_r: int
    n_bc: int = 0
    n_ic: int = 0
    n_ref: int = 0


@dataclass(frozen=True)
class Condition:
    """Fixed Dirichlet data: network outputs ``outputs`` must equal ``target`` on sampled points."""

    kind: str  # "bc" or "ic"
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    target: Callable[[np.ndarray], np.ndarray]
    outputs: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class PDEProblem:
    name: str
    box: DomainBox
    output_dim: int
    residual: Callable
    second_order: tuple[tuple[int, int], ...]
    reference: Callable[[np.ndarray], np.ndarray]
    counts: PointCounts
    hidden: tuple[int, ...]
    boundary: Condition | None = None
    initial: Condition | None = None
    exact_field: AnalyticField | None = None
    exact_theta: tuple[float, ...] = ()
    inverse_names: tuple[str, ...] = ()
    inverse_true: tuple[float, ...] = ()
    output_names: tuple[str, ...] = ("u",)
    observations: Callable[[int, int], ObservationSet] | None = None
    params: ProblemParams = field(default_factory=ProblemParams)

    @property
    def input_dim(self) -> int:
        return self.box.dim

    @property
    def n_inverse(self) -> int:
        return len(self.inverse_names)

    @property
    def is_inverse(self) -> bool:
        return self.n_inverse > 0

    def with_counts(self, **kw) -> "PDEProblem":
        return replace(self, counts=replace(self.counts, **kw))


# --- residual operators -----------------------------------------------------
# Each takes points X (N, d), a JetBatch and the inverse scalars and returns
# an (N, n_res) array.


def residual_burgers(X, jets, inv=None, nu=BURGERS_NU):
    u = jets.u(0)
    r = jets.d(0, 1) + u * jets.d(0, 0) - nu * jets.dd(0, 0, 0)
    return r[:, None]


def residual_allen_cahn(X, jets, inv=None, d=ALLEN_CAHN_D):
    u = jets.u(0)
    r = jets.d(0, 1) - d * jets.dd(0, 0, 0) - 5.0 * (u - u**3)
    return r[:, None]


def poisson_source(X):
    n = X.shape[1]
    return n * jnp.pi**2 * jnp.prod(jnp.sin(jnp.pi * X), axis=1)


def residual_poisson(X, jets, inv=None):
    lap = sum(jets.dd(0, i, i) for i in range(X.shape[1]))
    return (-lap - poisson_source(X))[:, None]


def residual_navier_stokes(X, jets, inv):
    lam1, lam2 = inv[0], inv[1]
    u, v = jets.u(0), jets.u(1)
    u_x, u_y, u_t = jets.d(0, 0), jets.d(0, 1), jets.d(0, 2)
    v_x, v_y, v_t = jets.d(1, 0), jets.d(1, 1), jets.d(1, 2)
    p_x, p_y = jets.d(2, 0), jets.d(2, 1)
    lap_u = jets.dd(0, 0, 0) + jets.dd(0, 1, 1)
    lap_v = jets.dd(1, 0, 0) + jets.dd(1, 1, 1)
    r1 = u_t + lam1 * (u * u_x + v * u_y) + p_x - lam2 * lap_u
    r2 = v_t + lam1 * (u * v_x + v * v_y) + p_y - lam2 * lap_v
    return jnp.stack([r1, r2], axis=1)


def poisson_exact(X):
    return jnp.prod(jnp.sin(jnp.pi * X), axis=1, keepdims=True)


# --- problem builders -------------------------------------------------------

_UNIT_X_T = DomainBox([-1.0, 0.0], [1.0, 1.0])


def burgers(params: ProblemParams | None = None) -> PDEProblem:
    params = params or ProblemParams()
    box = _UNIT_X_T
    ref = BurgersReference(params.nu)
    nu = params.nu
    return PDEProblem(
        name="burgers",
        box=box,
        output_dim=1,
        residual=lambda X, jets, inv=None: residual_burgers(X, jets, inv, nu=nu),
        second_order=((0, 0),),
        reference=lambda X: ref(X[:, 0], X[:, 1])[:, None],
        counts=PointCounts(n_r=2500, n_bc=80, n_ic=160),
        hidden=(64, 64, 64, 64),
        boundary=Condition("bc", lambda n, rng: sample_faces(box, [0], n, rng),
                           lambda X: np.zeros((X.shape[0], 1))),
        initial=Condition("ic", lambda n, rng: sample_faces(box, [], n, rng, fixed={1: 0.0}),
                          lambda X: -np.sin(np.pi * X[:, :1])),
        exact_field=AnalyticField(ref.field, 2, 1),
        params=params,
    )


def allen_cahn(params: ProblemParams | None = None) -> PDEProblem:
    params = params or ProblemParams()
    box = _UNIT_X_T
    d = params.d_ac
    ref_holder = {}

    def reference(X):
        if "ref" not in ref_holder:
            ref_holder["ref"] = AllenCahnReference(d=d)
        return ref_holder["ref"](X[:, 0], X[:, 1])[:, None]

    return PDEProblem(
        name="allen_cahn",
        box=box,
        output_dim=1,
        residual=lambda X, jets, inv=None: residual_allen_cahn(X, jets, inv, d=d),
        second_order=((0, 0),),
        reference=reference,
        counts=PointCounts(n_r=2500, n_bc=80, n_ic=160),
        hidden=(64, 64, 64, 64),
        boundary=Condition("bc", lambda n, rng: sample_faces(box, [0], n, rng),
                           lambda X: -np.ones((X.shape[0], 1))),
        initial=Condition("ic", lambda n, rng: sample_faces(box, [], n, rng, fixed={1: 0.0}),
                          lambda X: (X[:, :1] ** 2) * np.cos(np.pi * X[:, :1])),
        # the stable reaction fixed point u = 1 solves the PDE exactly
        exact_field=AnalyticField(lambda X: jnp.ones((X.shape[0], 1)), 2, 1),
        params=params,
    )


def poisson(params: ProblemParams | None = None, dim: int = 5) -> PDEProblem:
    params = params or ProblemParams()
    box = DomainBox(-np.ones(dim), np.ones(dim))
    return PDEProblem(
        name="poisson",
        box=box,
        output_dim=1,
        residual=residual_poisson,
        second_order=tuple((i, i) for i in range(dim)),
        reference=lambda X: np.prod(np.sin(np.pi * X), axis=1, keepdims=True),
        counts=PointCounts(n_r=750, n_bc=750),
        hidden=(64, 64, 64, 64),
        boundary=Condition("bc", lambda n, rng: sample_faces(box, list(range(dim)), n, rng),
                           lambda X: np.zeros((X.shape[0], 1))),
        exact_field=AnalyticField(poisson_exact, dim, 1),
        params=params,
    )


def navier_stokes(params: ProblemParams | None = None, data_path=None) -> PDEProblem:
    params = params or ProblemParams()
    box = NS_BOX
    nu = params.lambda2

    def observations(n, seed):
        if data_path is not None:
            obs = ObservationSet.read_csv(data_path)
            if n and n < len(obs):
                keep = np.random.default_rng(seed).choice(len(obs), size=n, replace=False)
                obs = ObservationSet(obs.rows[np.sort(keep)])
            return obs
        return gen_taylor_green(nu, n, seed)

    return PDEProblem(
        name="navier_stokes",
        box=box,
        output_dim=3,
        residual=residual_navier_stokes,
        second_order=((0, 0), (1, 1)),
        reference=lambda X: taylor_green_values(X, nu),
        counts=PointCounts(n_r=700, n_bc=200, n_ic=100, n_ref=7000),
        hidden=(50,) * 6,
        boundary=Condition("bc", lambda n, rng: sample_faces(box, [0, 1], n, rng),
                           lambda X: taylor_green_values(X, nu)[:, :2], outputs=(0, 1)),
        initial=Condition("ic", lambda n, rng: sample_faces(box, [], n, rng, fixed={2: 0.0}),
                          lambda X: taylor_green_values(X, nu)[:, :2], outputs=(0, 1)),
        exact_field=AnalyticField(taylor_green_field(nu), 3, 3, n_inverse=2),
        exact_theta=(params.lambda1, params.lambda2),
        inverse_names=("lambda1", "lambda2"),
        inverse_true=(params.lambda1, params.lambda2),
        output_names=("u", "v", "p"),
        observations=observations,
        params=params,
    )


_BUILDERS = {
    "burgers": burgers,
    "allen_cahn": allen_cahn,
    "poisson": poisson,
    "navier_stokes": navier_stokes,
}


def problem_names() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def get_problem(name: str, params: ProblemParams | None = None, **kw) -> PDEProblem:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {', '.join(_BUILDERS)}") from None
    return builder(params, **kw)
