"""Composite PINN loss and the Adam / L-BFGS block schedule with periodic resampling."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from pinnbench import diff_engine, evaluation
from pinnbench.errors import ConfigError, NumericError
from pinnbench.network import MLP, MLPConfig, init_glorot
from pinnbench.optim import LBFGSState, adam_param_step, lbfgs_init, lbfgs_step
from pinnbench.pacmann import PacmannConfig, move_points
from pinnbench.pde_suite.references import cache_dir
from pinnbench.samplers import (
    SAMPLER_KINDS,
    STATIC_KINDS,
    BaselineSamplerConfig,
    CollocationSet,
    hammersley,
    rad_resample,
    rar_step,
    rard_step,
    resample_random,
    uniform_grid,
    write_snapshot,
)

DATA_TERMS = ("ic", "bc", "ref")


@dataclass(frozen=True)
class LossWeights:
    lambda_r: float = 1.0
    lambda_ic: float = 1.0
    lambda_bc: float = 1.0
    lambda_ref: float = 1.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ConfigError(f"loss weight {k} must be > 0, got {v}")

    def of(self, term: str) -> float:
        return getattr(self, f"lambda_{term}")


ADAM_STATES = ("reset", "persist")


@dataclass(frozen=True)
class TrainSchedule:
    blocks: int = 2
    adam_iters: int = 2000
    lbfgs_iters: int = 500
    adam_lr: float = 1e-3
    period: int = 50
    lbfgs_history: int = 50
    log_every: int = 100
    # Adam state at the start of blocks after the first: "reset" zeroes both
    # moments and the step count, "persist" keeps them
    adam_state: str = "reset"

    def __post_init__(self):
        if self.blocks < 1 or self.adam_iters < 0 or self.lbfgs_iters < 0:
            raise ConfigError("need blocks >= 1 and non-negative iteration counts")
        if self.period < 1 or (self.adam_iters > 0 and self.period > self.adam_iters):
            raise ConfigError("resampling period must satisfy 1 <= period <= adam_iters")
        if not self.adam_lr > 0 or self.lbfgs_history < 1 or self.log_every < 1:
            raise ConfigError("need adam_lr > 0, lbfgs_history >= 1 and log_every >= 1")
        if self.adam_state not in ADAM_STATES:
            raise ConfigError(f"adam_state must be one of {ADAM_STATES}")

    @property
    def events_per_block(self) -> int:
        return self.adam_iters // self.period


@dataclass(frozen=True)
class SamplerConfig:
    """Collocation strategy for a run: a baseline kind or ``pacmann``."""

    kind: str = "pacmann"
    period: int = 50
    optimizer: str = "adam"
    stepsize: float = 1e-5
    steps: int = 5
    rar_add: int = 1
    rad_k: float = 1.0
    rad_c: float = 1.0
    pool_factor: int = 10
    init: str = "hammersley"

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {self.kind!r}; choose from {SAMPLER_KINDS}")
        if self.init not in ("hammersley", "uniform_grid", "random"):
            raise ConfigError(f"unknown initial layout {self.init!r}")
        if self.kind == "pacmann":
            self.pacmann()
        else:
            self.baseline()

    @property
    def is_static(self) -> bool:
        return self.kind in STATIC_KINDS

    def pacmann(self) -> PacmannConfig:
        return PacmannConfig(optimizer=self.optimizer, stepsize=self.stepsize, steps=self.steps, period=self.period)

    def baseline(self) -> BaselineSamplerConfig:
        return BaselineSamplerConfig(self.kind, self.period, self.rar_add, self.rad_k, self.rad_c, self.pool_factor)


# --- loss -------------------------------------------------------------------


@dataclass
class TrainingSets:
    """Point sets feeding each loss term; data terms are (X, Y) pairs or None."""

    r: np.ndarray
    ic: tuple[np.ndarray, np.ndarray] | None = None
    bc: tuple[np.ndarray, np.ndarray] | None = None
    ref: tuple[np.ndarray, np.ndarray] | None = None

    def batch(self, capacity: int | None = None) -> dict:
        """jnp arrays for the compiled loss.

        The residual set is padded to ``capacity`` rows with zero weight so a
        growing set keeps one array shape.
        """
        n = self.r.shape[0]
        cap = n if capacity is None else capacity
        if cap < n:
            raise ValueError("capacity smaller than the collocation set")
        Xr = np.empty((cap, self.r.shape[1]))
        Xr[:n] = self.r
        Xr[n:] = self.r[0]
        w = np.zeros(cap)
        w[:n] = 1.0 / n
        out = {"r": (jnp.asarray(Xr), jnp.asarray(w))}
        for k in DATA_TERMS:
            pair = getattr(self, k)
            if pair is not None:
                out[k] = (jnp.asarray(pair[0]), jnp.asarray(pair[1]))
        return out


def _data_outputs(problem) -> dict[str, tuple[int, ...]]:
    outs = {"ref": tuple(range(problem.output_dim))}
    if problem.initial is not None:
        outs["ic"] = tuple(problem.initial.outputs)
    if problem.boundary is not None:
        outs["bc"] = tuple(problem.boundary.outputs)
    return outs


def make_loss_terms(problem, field, weights: LossWeights, dtype=None) -> Callable:
    """Traceable ``terms(theta, batch) -> {"total", "r", "ic", "bc", "ref"}``.

    Each term is a mean over points of the squared error summed over
    components; absent terms contribute zero.  With ``dtype`` set, parameters
    and data are cast on entry, so gradients still come back in theta's dtype.
    """
    outputs = _data_outputs(problem)

    def terms(theta, batch):
        if dtype is not None:
            theta = theta.astype(dtype)
            batch = jax.tree_util.tree_map(lambda a: a.astype(dtype), batch)
        Xr, wr = batch["r"]
        out = {"r": jnp.sum(wr * diff_engine.sq_residual(problem, field, Xr, theta))}
        for k in DATA_TERMS:
            if k in batch:
                X, Y = batch[k]
                pred = field(X, theta)[:, list(outputs[k])]
                out[k] = jnp.mean(jnp.sum((pred - Y) ** 2, axis=1))
            else:
                out[k] = jnp.zeros(())
        out["total"] = sum(weights.of(k) * out[k] for k in ("r",) + DATA_TERMS)
        return out

    return terms


def compute_loss(problem, field, theta, sets: TrainingSets, weights: LossWeights = LossWeights()):
    """Total loss and its per-term breakdown (plain floats)."""
    t = make_loss_terms(problem, field, weights)(jnp.asarray(theta), sets.batch())
    total = float(t.pop("total"))
    return total, {k: float(v) for k, v in t.items()}


# --- compiled kernels -------------------------------------------------------


# network dtype for (Adam and resampling, L-BFGS)
PRECISIONS = {
    "float32": (jnp.float32, jnp.float32),
    "float64": (jnp.float64, jnp.float64),
    "mixed": (jnp.float32, jnp.float64),
}


def enable_compilation_cache() -> None:
    """Persist compiled kernels under the pinnbench cache directory.

    Runs that share network and batch shapes (all seeds of an experiment)
    then compile once.  A cache directory configured by the caller wins.
    """
    if jax.config.jax_compilation_cache_dir is None:
        jax.config.update("jax_compilation_cache_dir", str(cache_dir() / "xla"))
        jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.2)


class Kernels:
    """jit-compiled loss, optimizer and residual functions for one run.

    ``precision`` picks the dtype of network evaluation: ``mixed`` runs Adam
    and point movement in float32 and the L-BFGS objective in float64.
    Optimizer state and collocation points stay in float64 either way.
    """

    def __init__(self, problem, field, weights: LossWeights, lr: float, precision: str = "mixed"):
        if precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {tuple(PRECISIONS)}")
        dt, dt_lbfgs = PRECISIONS[precision]
        terms = make_loss_terms(problem, field, weights, dt)

        def value_and_grad(terms_fn):
            def total(theta, batch):
                t = terms_fn(theta, batch)
                return t["total"], t

            return jax.value_and_grad(total, has_aux=True)

        vg = value_and_grad(terms)
        vg_lbfgs = value_and_grad(make_loss_terms(problem, field, weights, dt_lbfgs))

        def adam(theta, m, v, t, batch):
            (_, tt), g = vg(theta, batch)
            theta, m, v = adam_param_step(theta, g, m, v, t, lr)
            return theta, m, v, tt["total"]

        def value_grad(theta, batch):
            (f, _), g = vg_lbfgs(theta, batch)
            return f, g

        self.terms = jax.jit(terms)
        self.adam = jax.jit(adam)
        self.value_grad = jax.jit(value_grad)

        def sq_res(theta, X):
            return diff_engine.sq_residual(problem, field, X.astype(dt), theta.astype(dt))

        def sq_res_grad(theta, X):
            # differentiate through the cast so the gradient is float64 like X
            return jax.grad(lambda Y: jnp.sum(sq_res(theta, Y)))(X)

        self.sq_res = jax.jit(lambda theta, X: sq_res(theta, X).astype(jnp.float64))
        self.sq_res_grad = jax.jit(sq_res_grad)
        self.predict = jax.jit(lambda theta, X: field(X.astype(dt), theta.astype(dt)).astype(jnp.float64))


# --- logging ----------------------------------------------------------------


def log_columns(inverse_names=()) -> list[str]:
    return ["iteration", "phase", "loss_total", "loss_r", "loss_ic", "loss_bc", "loss_ref", "l2_error", *inverse_names]


class TrainLog:
    """Collects log rows; optionally streams them to a text handle."""

    def __init__(self, inverse_names=(), fh=None):
        self.columns = log_columns(inverse_names)
        self.rows: list[dict] = []
        self._fh = fh
        if fh is not None:
            self._writer = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
            self._writer.writeheader()

    def append(self, row: dict):
        self.rows.append(row)
        if self._fh is not None:
            self._writer.writerow(row)
            self._fh.flush()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()


# --- training ---------------------------------------------------------------


@dataclass
class TrainState:
    theta: np.ndarray
    iteration: int = 0
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None
    adam_t: int = 0
    lbfgs: LBFGSState | None = None
    cset: CollocationSet | None = None
    rng: np.random.Generator | None = None
    phase: str = "init"
    events: int = 0
    status: str = "ok"
    final_loss: float = math.nan
    warnings: list = field(default_factory=list)


@dataclass
class TrainResult:
    state: TrainState
    record: evaluation.RunRecord
    log: TrainLog


def _initial_set(kind: str, init: str, n: int, box, rng) -> CollocationSet:
    if kind == "uniform_grid":
        return uniform_grid(n, box)
    if kind == "hammersley" or init == "hammersley":
        return hammersley(n, box)
    if init == "uniform_grid":
        return uniform_grid(n, box)
    return resample_random(n, box, rng)


def _condition_data(cond, n, rng):
    if cond is None or n <= 0:
        return None
    X = np.asarray(cond.sampler(n, rng), dtype=np.float64)
    return X, np.asarray(cond.target(X), dtype=np.float64).reshape(X.shape[0], -1)


def train(
    problem,
    hidden: tuple[int, ...] | None = None,
    schedule: TrainSchedule = TrainSchedule(),
    sampler: SamplerConfig = SamplerConfig(),
    weights: LossWeights = LossWeights(),
    seed: int = 0,
    *,
    data_seed: int = 0,
    run_id: str | None = None,
    config_echo: dict | None = None,
    log_fh=None,
    snapshot_fh=None,
    snapshot_every: int = 0,
    eval_points: int = evaluation.EVAL_POINTS,
    precision: str = "mixed",
) -> TrainResult:
    """Train a PINN for ``problem``; returns final state, run record and log.

    Each block runs ``adam_iters`` Adam steps with a resampling event after
    every ``period`` of them, then ``lbfgs_iters`` L-BFGS steps on a frozen
    collocation set.  ``snapshot_every`` > 0 writes the set at the start and
    after every that-many events to ``snapshot_fh``.
    """
    t_start = time.perf_counter()
    enable_compilation_cache()
    if sampler.period != schedule.period:
        raise ConfigError("sampler period and schedule period disagree")
    hidden = tuple(problem.hidden if hidden is None else hidden)
    cfg = MLPConfig(problem.input_dim, problem.output_dim, hidden, n_inverse=problem.n_inverse)
    net = MLP(cfg)
    kern = Kernels(problem, net, weights, schedule.adam_lr, precision)
    counts = problem.counts

    cond_rng, sample_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    theta = init_glorot(cfg, seed)
    state = TrainState(theta=theta, adam_m=np.zeros_like(theta), adam_v=np.zeros_like(theta), rng=sample_rng)
    state.cset = _initial_set(sampler.kind, sampler.init, counts.n_r, problem.box, sample_rng).check(problem.box)
    n_r = len(state.cset)

    ref = None
    if problem.observations is not None and counts.n_ref > 0:
        obs = problem.observations(counts.n_ref, data_seed)
        ref = (obs.points, obs.values)
    ic = _condition_data(problem.initial, counts.n_ic, cond_rng)
    bc = _condition_data(problem.boundary, counts.n_bc, cond_rng)

    total_events = schedule.events_per_block * schedule.blocks
    growing = sampler.kind in ("rar", "rar_d")
    capacity = n_r + (sampler.rar_add * total_events if growing else 0)

    def make_batch():
        return TrainingSets(state.cset.points, ic, bc, ref).batch(capacity)

    batch = make_batch()

    X_eval = evaluation.eval_grid(problem.box, eval_points)
    U_eval = np.asarray(problem.reference(X_eval), dtype=np.float64)
    log = TrainLog(problem.inverse_names, log_fh)
    echo = dict(config_echo or {})
    run_id = run_id or f"{problem.name}-{sampler.kind}-{seed}"

    def errors(theta_):
        pred = np.asarray(kern.predict(jnp.asarray(theta_), jnp.asarray(X_eval)))
        inv = np.asarray(theta_)[cfg.n_network_params:]
        return evaluation.error_report(U_eval, pred, problem.output_names, inv, problem.inverse_true, problem.inverse_names)

    def log_row(phase):
        th = jnp.asarray(state.theta)
        t = {k: float(v) for k, v in kern.terms(th, batch).items()}
        row = {
            "iteration": state.iteration, "phase": phase,
            "loss_total": f"{t['total']:.17g}", "loss_r": f"{t['r']:.17g}", "loss_ic": f"{t['ic']:.17g}",
            "loss_bc": f"{t['bc']:.17g}", "loss_ref": f"{t['ref']:.17g}",
        }
        finite = math.isfinite(t["total"])
        row["l2_error"] = f"{errors(state.theta).l2:.17g}" if finite else "nan"
        inv = np.asarray(state.theta)[cfg.n_network_params:]
        for name, v in zip(problem.inverse_names, inv):
            row[name] = f"{float(v):.17g}"
        log.append(row)
        return t["total"]

    def snapshot():
        if snapshot_fh is not None and snapshot_every > 0 and state.events % snapshot_every == 0:
            write_snapshot(snapshot_fh, state.iteration, state.cset, header=state.events == 0)

    def finish(status):
        state.status = status
        if status == "ok":
            rep = errors(state.theta)
            if not rep.is_finite():
                status = state.status = "diverged"
        if status != "ok":
            rep = evaluation.ErrorReport.nan(problem.output_names, problem.inverse_names)
        rec = evaluation.RunRecord(run_id, echo, seed, rep, time.perf_counter() - t_start, status, state.final_loss)
        return TrainResult(state, rec, log)

    # resampling ------------------------------------------------------------
    pcfg = sampler.pacmann() if sampler.kind == "pacmann" else None
    pool_n = sampler.pool_factor * counts.n_r

    def resample_event():
        assert state.phase == "adam", "resampling outside an Adam phase"
        theta_before = np.array(state.theta, copy=True)
        th = jnp.asarray(theta_before)
        box, rng, kind = problem.box, state.rng, sampler.kind
        if kind == "random_resample":
            new = CollocationSet(resample_random(n_r, box, rng).points, "replaced")
        elif kind == "pacmann":
            new, _ = move_points(
                state.cset, box, pcfg,
                lambda X: kern.sq_res_grad(th, jnp.asarray(X)),
                lambda X: kern.sq_res(th, jnp.asarray(X)),
                rng,
            )
        else:
            pool = box.sample(pool_n, rng)
            r = np.sqrt(np.asarray(kern.sq_res(th, jnp.asarray(pool))))
            if kind == "rar":
                new = rar_step(state.cset, pool, r, sampler.rar_add)
            elif kind == "rad":
                new = CollocationSet(rad_resample(n_r, pool, r, sampler.rad_k, sampler.rad_c, rng).points, "replaced")
            else:
                new = rard_step(state.cset, pool, r, sampler.rar_add, sampler.rad_k, sampler.rad_c, rng)
        state.cset = new.check(box)
        assert np.array_equal(np.asarray(state.theta), theta_before), "resampling changed theta"
        state.events += 1

    snapshot()
    static_points = state.cset.points.copy() if sampler.is_static else None

    for block in range(schedule.blocks):
        state.phase = "adam"
        if block > 0 and schedule.adam_state == "reset":
            state.adam_m, state.adam_v, state.adam_t = np.zeros_like(theta), np.zeros_like(theta), 0
        theta_j = jnp.asarray(state.theta)
        m_j, v_j = jnp.asarray(state.adam_m), jnp.asarray(state.adam_v)
        for k in range(1, schedule.adam_iters + 1):
            state.adam_t += 1
            theta_j, m_j, v_j, loss = kern.adam(theta_j, m_j, v_j, jnp.float64(state.adam_t), batch)
            state.iteration += 1
            if not math.isfinite(float(loss)):
                state.theta = np.asarray(theta_j)
                state.warnings.append(f"non-finite loss at iteration {state.iteration}")
                return finish("diverged")
            state.theta = theta_j
            if state.iteration % schedule.log_every == 0:
                log_row("adam")
            if not sampler.is_static and k % schedule.period == 0:
                state.theta = np.asarray(theta_j)
                try:
                    resample_event()
                except NumericError as exc:
                    state.warnings.append(str(exc))
                    return finish("diverged")
                batch = make_batch()
                snapshot()
        state.theta = np.asarray(theta_j)
        state.adam_m, state.adam_v = np.asarray(m_j), np.asarray(v_j)
        if state.iteration % schedule.log_every:
            log_row("adam")

        # L-BFGS phase: frozen collocation set, fresh curvature history
        state.phase = "lbfgs"
        if schedule.lbfgs_iters > 0:
            frozen_batch = batch

            def fun(x):
                f, g = kern.value_grad(jnp.asarray(x), frozen_batch)
                return float(f), np.asarray(g)

            state.lbfgs = lbfgs_init(fun, state.theta, schedule.lbfgs_history)
            for _ in range(schedule.lbfgs_iters):
                if state.lbfgs.converged:
                    break
                lbfgs_step(state.lbfgs, fun)
                assert len(state.lbfgs.s_hist) <= schedule.lbfgs_history
                state.iteration += 1
                state.theta = state.lbfgs.x
                if not math.isfinite(state.lbfgs.f):
                    return finish("diverged")
                if state.iteration % schedule.log_every == 0:
                    log_row("lbfgs")
            state.warnings.extend(state.lbfgs.warnings)
        if state.iteration % schedule.log_every:
            log_row("lbfgs")

        if static_points is not None:
            assert np.array_equal(state.cset.points, static_points), "static collocation set was mutated"

    state.phase = "done"
    state.theta = np.asarray(state.theta)
    state.final_loss = float(kern.terms(jnp.asarray(state.theta), batch)["total"])
    if not math.isfinite(state.final_loss):
        return finish("diverged")
    return finish("ok")
