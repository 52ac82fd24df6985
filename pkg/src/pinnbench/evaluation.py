"""Test error, multi-seed aggregation and the divergent-run filter."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from pinnbench.errors import ConfigError, DomainError
from pinnbench.samplers import grid_axis_counts, hammersley_unit

STATUSES = ("ok", "diverged", "filtered")
EVAL_POINTS = 10_000

RESULTS_COLUMNS = (
    "run_id", "problem", "sampler", "point_optimizer", "stepsize", "num_steps", "period",
    "n_collocation", "seed", "status", "l2", "l2_u", "l2_v", "l2_p",
    "lambda1_relerr", "lambda2_relerr", "wall_time_s",
)


def l2_relative_error(u_true, u_pred) -> float:
    """||u_true - u_pred||_2 / ||u_true||_2 over all entries."""
    u_true = np.asarray(u_true, dtype=np.float64).reshape(-1)
    u_pred = np.asarray(u_pred, dtype=np.float64).reshape(-1)
    if u_true.shape != u_pred.shape:
        raise ConfigError(f"length mismatch: {u_true.size} true vs {u_pred.size} predicted values")
    denom = float(np.linalg.norm(u_true))
    if denom == 0.0:
        raise DomainError("relative error undefined for an all-zero reference")
    return float(np.linalg.norm(u_true - u_pred)) / denom


def eval_grid(box, n: int = EVAL_POINTS) -> np.ndarray:
    """Fixed evaluation point set: a balanced tensor grid up to 3-D, Hammersley beyond.

    In 2-D with n = 10000 this is the 100 x 100 grid including the box edges.
    """
    if box.dim <= 3:
        counts = grid_axis_counts(n, box)
        axes = [np.linspace(box.lower[i], box.upper[i], c) for i, c in enumerate(counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)
    return box.from_unit(hammersley_unit(n, box.dim))


@dataclass
class ErrorReport:
    l2: float
    per_output: dict[str, float] = field(default_factory=dict)
    inverse_relerr: dict[str, float] = field(default_factory=dict)
    inverse_values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.l2 >= 0 or math.isnan(self.l2)):
            raise ValueError("l2 must be non-negative")

    @classmethod
    def nan(cls, output_names=("u",), inverse_names=()) -> "ErrorReport":
        return cls(
            math.nan,
            {k: math.nan for k in output_names} if len(output_names) > 1 else {},
            {k: math.nan for k in inverse_names},
            {k: math.nan for k in inverse_names},
        )

    def is_finite(self) -> bool:
        vals = [self.l2, *self.per_output.values(), *self.inverse_relerr.values()]
        return all(math.isfinite(v) for v in vals)


def error_report(u_true, u_pred, output_names=("u",), inverse_hat=(), inverse_true=(), inverse_names=()) -> ErrorReport:
    u_true = np.asarray(u_true, dtype=np.float64)
    u_pred = np.asarray(u_pred, dtype=np.float64)
    if u_true.ndim == 1:
        u_true, u_pred = u_true[:, None], u_pred.reshape(-1, 1)
    per = {}
    if u_true.shape[1] > 1:
        per = {name: l2_relative_error(u_true[:, k], u_pred[:, k]) for k, name in enumerate(output_names)}
    inv = {n: abs(float(h) - t) / abs(t) for n, h, t in zip(inverse_names, inverse_hat, inverse_true)}
    vals = {n: float(h) for n, h in zip(inverse_names, inverse_hat)}
    return ErrorReport(l2_relative_error(u_true, u_pred), per, inv, vals)


@dataclass
class RunRecord:
    run_id: str
    config: dict
    seed: int
    errors: ErrorReport
    wall_time: float
    status: str = "ok"
    final_loss: float = math.nan

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")
        if self.status == "ok" and not self.errors.is_finite():
            raise ValueError(f"run {self.run_id}: status ok requires finite errors")

    def to_row(self) -> dict:
        c = self.config
        s = c.get("sampler", {})
        e = self.errors
        return {
            "run_id": self.run_id,
            "problem": c.get("problem", ""),
            "sampler": s.get("kind", ""),
            "point_optimizer": s.get("optimizer", "") if s.get("kind") == "pacmann" else "",
            "stepsize": _fmt(s.get("stepsize")) if s.get("kind") == "pacmann" else "",
            "num_steps": s.get("steps", "") if s.get("kind") == "pacmann" else "",
            "period": s.get("period", ""),
            "n_collocation": c.get("counts", {}).get("n_r", ""),
            "seed": self.seed,
            "status": self.status,
            "l2": _fmt(e.l2),
            "l2_u": _fmt(e.per_output.get("u")),
            "l2_v": _fmt(e.per_output.get("v")),
            "l2_p": _fmt(e.per_output.get("p")),
            "lambda1_relerr": _fmt(e.inverse_relerr.get("lambda1")),
            "lambda2_relerr": _fmt(e.inverse_relerr.get("lambda2")),
            "wall_time_s": f"{self.wall_time:.3f}",
        }


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    return f"{float(v):.17g}"


def write_results(path, records: Sequence[RunRecord], extra: Sequence[dict] | None = None) -> None:
    """Write the results CSV; ``extra`` supplies additional trailing columns per record."""
    extra_cols = list(extra[0]) if extra else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(RESULTS_COLUMNS) + extra_cols, lineterminator="\n")
        w.writeheader()
        for i, rec in enumerate(records):
            row = rec.to_row()
            if extra:
                row.update(extra[i])
            w.writerow(row)


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames[: len(RESULTS_COLUMNS)]) != RESULTS_COLUMNS:
            raise ConfigError(f"{path}: unexpected results header")
        return list(r)


# --- cohort statistics ------------------------------------------------------


@dataclass(frozen=True)
class FilterThresholds:
    loss_factor: float = 100.0
    l2_factor: float = 10.0


def filter_divergent(records: Sequence[RunRecord], thresholds: FilterThresholds = FilterThresholds()) -> list[RunRecord]:
    """Mark ok-runs far above the cohort median loss or error as ``filtered``.

    A cohort of a single ok run has no median basis and is left alone.
    """
    ok = [r for r in records if r.status == "ok"]
    if len(ok) < 2:
        return list(records)
    med_loss = statistics.median(r.final_loss for r in ok)
    med_l2 = statistics.median(r.errors.l2 for r in ok)
    out = []
    for r in records:
        if r.status == "ok" and (
            r.final_loss > thresholds.loss_factor * med_loss or r.errors.l2 > thresholds.l2_factor * med_l2
        ):
            r = replace(r, status="filtered")
        out.append(r)
    return out


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    sd: float
    n: int


def aggregate(records: Sequence[RunRecord]) -> AggregateStats:
    vals = sorted(r.errors.l2 for r in records if r.status == "ok")
    if not vals:
        raise DomainError("no successful runs to aggregate")
    mean = math.fsum(vals) / len(vals)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else 0.0
    return AggregateStats(mean, sd, len(vals))


__all__ = [
    "AggregateStats",
    "ErrorReport",
    "FilterThresholds",
    "RESULTS_COLUMNS",
    "RunRecord",
    "aggregate",
    "error_report",
    "eval_grid",
    "filter_divergent",
    "l2_relative_error",
    "read_results",
    "write_results",
]
