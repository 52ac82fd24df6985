"""Experiment configuration: strict JSON schema, per-problem defaults, sweeps."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from pinnbench.errors import ConfigError
from pinnbench.evaluation import FilterThresholds
from pinnbench.pacmann import OPTIMIZERS
from pinnbench.pde_suite import get_problem, problem_names
from pinnbench.samplers import SAMPLER_KINDS
from pinnbench.trainer import PRECISIONS, LossWeights, SamplerConfig, TrainSchedule

# leaf type tags: "int", "float", "str", "ints" (list of int), "path" (str or null)
SCHEMA = {
    "problem": "str",
    "net": {"hidden": "ints"},
    "counts": {"n_r": "int", "n_bc": "int", "n_ic": "int", "n_ref": "int"},
    "schedule": {
        "blocks": "int", "adam_iters": "int", "lbfgs_iters": "int", "adam_lr": "float",
        "lbfgs_history": "int", "log_every": "int", "adam_state": "str",
    },
    "sampler": {
        "kind": "str", "period": "int", "optimizer": "str", "stepsize": "float", "steps": "int",
        "rar_add": "int", "rad_k": "float", "rad_c": "float", "pool_factor": "int", "init": "str",
    },
    "weights": {"lambda_r": "float", "lambda_ic": "float", "lambda_bc": "float", "lambda_ref": "float"},
    "seeds": "ints",
    "eval": {"points": "int", "loss_factor": "float", "l2_factor": "float", "retries": "int"},
    "data": {"path": "path", "seed": "int"},
    "output_dir": "path",
    "snapshot_every": "int",
    "precision": "str",
}

# point-optimizer settings per problem: (stepsize, steps)
PACMANN_DEFAULTS = {
    "burgers": (1e-5, 15),
    "allen_cahn": (1e-5, 5),
    "poisson": (1e-2, 5),
    "navier_stokes": (1e-2, 5),
}


def defaults(problem: str) -> dict:
    """Fully populated config for ``problem`` at desk scale."""
    prob = get_problem(problem)
    s, T = PACMANN_DEFAULTS[problem]
    c = prob.counts
    return {
        "problem": problem,
        "net": {"hidden": list(prob.hidden)},
        "counts": {"n_r": c.n_r, "n_bc": c.n_bc, "n_ic": c.n_ic, "n_ref": c.n_ref},
        "schedule": {"blocks": 2, "adam_iters": 2000, "lbfgs_iters": 500, "adam_lr": 1e-3,
                     "lbfgs_history": 50, "log_every": 100, "adam_state": "reset"},
        "sampler": {"kind": "pacmann", "period": 50, "optimizer": "adam", "stepsize": s, "steps": T,
                    "rar_add": 1, "rad_k": 1.0, "rad_c": 1.0, "pool_factor": 10, "init": "hammersley"},
        "weights": {"lambda_r": 1.0, "lambda_ic": 1.0, "lambda_bc": 1.0, "lambda_ref": 1.0},
        "seeds": [0],
        "eval": {"points": 10000, "loss_factor": 100.0, "l2_factor": 10.0, "retries": 2},
        "data": {"path": None, "seed": 0},
        "output_dir": None,
        "snapshot_every": 0,
        "precision": "mixed",
    }


def _check_leaf(path: str, tag: str, v):
    ok = {
        "int": lambda x: isinstance(x, int) and not isinstance(x, bool),
        "float": lambda x: isinstance(x, (int, float)) and not isinstance(x, bool),
        "str": lambda x: isinstance(x, str),
        "ints": lambda x: isinstance(x, list) and all(isinstance(i, int) and not isinstance(i, bool) for i in x),
        "path": lambda x: x is None or isinstance(x, str),
    }[tag](v)
    if not ok:
        raise ConfigError(f"config key {path!r}: expected {tag}, got {v!r}")


def _merge(base: dict, user: dict, schema: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in user.items():
        path = f"{prefix}{k}"
        if k not in schema:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(schema[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path!r} must be an object")
            out[k] = _merge(base[k], v, schema[k], path + ".")
        else:
            _check_leaf(path, schema[k], v)
            out[k] = float(v) if schema[k] == "float" else v
    return out


def schema_has(path: str) -> bool:
    node = SCHEMA
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return False
        node = node[part]
    return not isinstance(node, dict)


def set_path(d: dict, path: str, value) -> dict:
    out = copy.deepcopy(d)
    node = out
    *head, last = path.split(".")
    for p in head:
        node = node[p]
    node[last] = value
    return out


def get_path(d: dict, path: str):
    for p in path.split("."):
        d = d[p]
    return d


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; ``raw`` is the full resolved JSON dict."""

    raw: dict

    @classmethod
    def from_dict(cls, user: dict) -> "ExperimentConfig":
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        name = user.get("problem")
        if name not in problem_names():
            raise ConfigError(f"config needs 'problem' in {problem_names()}, got {name!r}")
        raw = _merge(defaults(name), user, SCHEMA)
        cfg = cls(raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_value(self, path: str, value) -> "ExperimentConfig":
        if not schema_has(path):
            raise ConfigError(f"no config field {path!r}")
        return ExperimentConfig.from_dict(set_path(self.raw, path, value))

    def validate(self):
        r = self.raw
        if not r["seeds"]:
            raise ConfigError("seeds must be non-empty")
        if len(set(r["seeds"])) != len(r["seeds"]):
            raise ConfigError("seeds must be distinct")
        if r["sampler"]["kind"] not in SAMPLER_KINDS:
            raise ConfigError(f"sampler.kind must be one of {SAMPLER_KINDS}")
        if r["sampler"]["optimizer"] not in OPTIMIZERS:
            raise ConfigError(f"sampler.optimizer must be one of {OPTIMIZERS}")
        if r["precision"] not in PRECISIONS:
            raise ConfigError(f"precision must be one of {tuple(PRECISIONS)}")
        if not r["net"]["hidden"] or min(r["net"]["hidden"]) < 1:
            raise ConfigError("net.hidden needs at least one positive width")
        if r["counts"]["n_r"] < 1 or min(r["counts"].values()) < 0:
            raise ConfigError("point counts must be non-negative with n_r >= 1")
        if r["eval"]["retries"] < 0 or r["eval"]["points"] < 1 or r["snapshot_every"] < 0:
            raise ConfigError("eval.retries and snapshot_every must be >= 0, eval.points >= 1")
        # constructing the typed views runs their own checks
        self.schedule()
        self.sampler()
        self.weights()
        self.thresholds()
        prob = self.problem()
        if prob.is_inverse and r["counts"]["n_ref"] < 1:
            raise ConfigError("inverse problems need counts.n_ref >= 1 observations")

    # typed views -----------------------------------------------------------

    @property
    def seeds(self) -> list[int]:
        return list(self.raw["seeds"])

    def problem(self):
        r = self.raw
        kw = {"data_path": r["data"]["path"]} if r["problem"] == "navier_stokes" else {}
        return get_problem(r["problem"], **kw).with_counts(**r["counts"])

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(period=self.raw["sampler"]["period"], **self.raw["schedule"])

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(**self.raw["sampler"])

    def weights(self) -> LossWeights:
        return LossWeights(**self.raw["weights"])

    def thresholds(self) -> FilterThresholds:
        e = self.raw["eval"]
        return FilterThresholds(e["loss_factor"], e["l2_factor"])

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(self.raw["net"]["hidden"])

    def default_output_dir(self) -> str:
        r = self.raw
        return r["output_dir"] or f"runs/{r['problem']}-{r['sampler']['kind']}"

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    param: str
    values: tuple

    def __post_init__(self):
        if not schema_has(self.param):
            raise ConfigError(f"swept path {self.param!r} is not a config field")
        if self.param == "seeds":
            raise ConfigError("sweep over seeds via the base config's seed list instead")
        if not self.values:
            raise ConfigError("sweep needs at least one value")

    @classmethod
    def load(cls, path) -> "SweepSpec":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"sweep spec not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)

    @classmethod
    def from_dict(cls, data: dict, root: Path = Path(".")) -> "SweepSpec":
        extra = set(data) - {"base", "param", "values"}
        if extra:
            raise ConfigError(f"unknown sweep keys {sorted(extra)}")
        for k in ("base", "param", "values"):
            if k not in data:
                raise ConfigError(f"sweep spec needs {k!r}")
        base = data["base"]
        if isinstance(base, str):
            p = Path(base)
            base = ExperimentConfig.load(p if p.is_absolute() else root / p)
        else:
            base = ExperimentConfig.from_dict(base)
        if not isinstance(data["values"], list):
            raise ConfigError("sweep values must be a list")
        return cls(base, data["param"], tuple(data["values"]))

    def configs(self) -> list[ExperimentConfig]:
        return [self.base.with_value(self.param, v) for v in self.values]


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("pinnbench.configs").iterdir() if p.name.endswith(".json"))


def preset_path(name: str) -> Path:
    p = resources.files("pinnbench.configs") / f"{name}.json"
    if not p.is_file():
        raise ConfigError(f"no preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(p))
