"""Command-line harness: runs, sweeps, dataset generation, point snapshots."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from pinnbench.config import ExperimentConfig, SweepSpec, preset_names, preset_path
from pinnbench.errors import ConfigError
from pinnbench.evaluation import RunRecord, aggregate, filter_divergent, write_results
from pinnbench.network import MLPConfig, save_checkpoint
from pinnbench.samplers import read_snapshots, write_snapshot

log = logging.getLogger("pinnbench")

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2


# --- single runs --------------------------------------------------------------


def run_one(raw: dict, seed: int, out_dir: str) -> RunRecord:
    """Train one seed and write its log, checkpoint and record into ``out_dir/<run_id>``."""
    from pinnbench.trainer import train

    cfg = ExperimentConfig.from_dict(raw)
    problem = cfg.problem()
    run_id = f"{problem.name}-{raw['sampler']['kind']}-s{seed}"
    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    echo = dict(raw, seeds=[seed])
    snap_every = raw["snapshot_every"]
    snap_path = run_dir / "points.csv"
    with open(run_dir / "train_log.csv", "w", newline="") as log_fh:
        snap_fh = open(snap_path, "w", newline="") if snap_every else None
        try:
            res = train(
                problem, cfg.hidden, cfg.schedule(), cfg.sampler(), cfg.weights(), seed,
                data_seed=raw["data"]["seed"], run_id=run_id, config_echo=echo,
                log_fh=log_fh, snapshot_fh=snap_fh, snapshot_every=snap_every,
                eval_points=raw["eval"]["points"], precision=raw["precision"],
            )
        finally:
            if snap_fh is not None:
                snap_fh.close()
    net = MLPConfig(problem.input_dim, problem.output_dim, cfg.hidden, n_inverse=problem.n_inverse)
    save_checkpoint(run_dir / "theta.bin", net, res.state.theta)
    rec = res.record
    payload = {
        "run_id": rec.run_id, "seed": rec.seed, "status": rec.status,
        "l2": rec.errors.l2, "l2_per_output": rec.errors.per_output,
        "inverse_values": rec.errors.inverse_values, "inverse_relerr": rec.errors.inverse_relerr,
        "final_loss": rec.final_loss, "wall_time_s": rec.wall_time,
        "iterations": res.state.iteration, "resampling_events": res.state.events,
        "warnings": res.state.warnings, "config": echo,
    }
    (run_dir / "record.json").write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")
    log.info("%s: %s l2=%.4g (%.1fs)", rec.run_id, rec.status, rec.errors.l2, rec.wall_time)
    return rec


def _run_batch(raw: dict, seeds: list[int], out_dir: str, jobs: int) -> list[RunRecord]:
    if jobs <= 1 or len(seeds) == 1:
        return [run_one(raw, s, out_dir) for s in seeds]
    # jax does not survive fork; use fresh interpreters
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(jobs, len(seeds)), mp_context=ctx) as ex:
        return list(ex.map(run_one, [raw] * len(seeds), seeds, [out_dir] * len(seeds)))


def execute(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> list[RunRecord]:
    """Run every seed, filter divergent runs and retry them with fresh seeds.

    Returns all records in execution order, failed attempts included.
    """
    seeds = cfg.seeds
    thresholds = cfg.thresholds()
    history = _run_batch(cfg.raw, seeds, out_dir, jobs)
    latest = list(history)  # one slot per requested seed
    used = set(seeds)
    next_seed = max(seeds) + 1
    for attempt in range(cfg.raw["eval"]["retries"] + 1):
        judged = filter_divergent(latest, thresholds)
        for rec in judged:
            for i, h in enumerate(history):
                if h.run_id == rec.run_id:
                    history[i] = rec
        bad = [i for i, r in enumerate(judged) if r.status != "ok"]
        latest = judged
        if not bad or attempt == cfg.raw["eval"]["retries"]:
            break
        fresh = []
        for _ in bad:
            while next_seed in used:
                next_seed += 1
            fresh.append(next_seed)
            used.add(next_seed)
        log.info("retrying %d run(s) with seeds %s", len(bad), fresh)
        redo = _run_batch(cfg.raw, fresh, out_dir, jobs)
        history.extend(redo)
        for i, rec in zip(bad, redo):
            latest[i] = rec
    return history


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PINNBENCH_JOBS", "1")))
    except ValueError:
        raise ConfigError("PINNBENCH_JOBS must be an integer") from None


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_value("seeds", [args.seed])
    out = Path(args.out or cfg.default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    records = execute(cfg, str(out), args.jobs or _default_jobs())
    write_results(out / "results.csv", records)
    ok = [r for r in records if r.status == "ok"]
    if ok:
        st = aggregate(records)
        print(f"{len(ok)}/{len(records)} runs ok; l2 mean {st.mean:.4g} sd {st.sd:.4g} -> {out / 'results.csv'}")
        return EXIT_OK
    print(f"all {len(records)} runs diverged -> {out / 'results.csv'}", file=sys.stderr)
    return EXIT_DIVERGED


def cmd_sweep(args) -> int:
    spec = SweepSpec.load(args.spec)
    base = spec.base
    out = Path(args.out or base.raw["output_dir"] or f"runs/sweep-{spec.param}")
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs or _default_jobs()
    all_records, extra, agg_rows = [], [], []
    for value, cfg in zip(spec.values, spec.configs()):
        tag = json.dumps(value)
        cell = out / f"{spec.param}={tag}"
        records = execute(cfg, str(cell), jobs)
        all_records += records
        extra += [{"sweep_param": spec.param, "sweep_value": tag}] * len(records)
        ok = [r for r in records if r.status == "ok"]
        if ok:
            st = aggregate(records)
            agg_rows.append([spec.param, tag, f"{st.mean:.17g}", f"{st.sd:.17g}", st.n])
        else:
            agg_rows.append([spec.param, tag, "nan", "nan", 0])
    write_results(out / "results.csv", all_records, extra)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_param", "sweep_value", "l2_mean", "l2_sd", "n_ok"])
        w.writerows(agg_rows)
    print(f"{len(all_records)} runs over {len(spec.values)} values -> {out / 'results.csv'}")
    return EXIT_OK if any(r.status == "ok" for r in all_records) else EXIT_DIVERGED


def _write_table(path: Path, ts, xs, U):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "u"])
        for i, t in enumerate(ts):
            for j, x in enumerate(xs):
                w.writerow([f"{t:.17g}", f"{x:.17g}", f"{U[i, j]:.17g}"])


def cmd_gendata(args) -> int:
    from pinnbench.pde_suite.references import AllenCahnReference, BurgersReference
    from pinnbench.pde_suite.taylor_green import TG_NU, gen_taylor_green

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.problem == "navier_stokes":
        rows = 7000 if args.rows is None else args.rows
        if rows < 1:
            raise ConfigError("--rows must be >= 1")
        gen_taylor_green(TG_NU, rows, args.seed).write_csv(out)
        print(f"{rows} Taylor-Green observations -> {out}")
    elif args.problem == "burgers":
        xs, ts, U = BurgersReference().table()
        _write_table(out, ts, xs, U)
        print(f"Burgers reference table {U.shape} -> {out}")
    elif args.problem == "allen_cahn":
        ref = AllenCahnReference()
        _write_table(out, ref.ts, ref.x, ref.slices)
        print(f"Allen-Cahn reference table {ref.slices.shape} -> {out}")
    else:
        raise ConfigError(f"no dataset to generate for {args.problem!r} (closed-form reference)")
    return EXIT_OK


def cmd_snapshots(args) -> int:
    run = Path(args.run)
    src = run / "points.csv"
    if not src.is_file():
        raise ConfigError(f"{src} not found; run with snapshot_every >= 1 to record points")
    snaps = read_snapshots(src)
    dest = run / "snapshots"
    dest.mkdir(exist_ok=True)
    for k, (it, cset) in enumerate(snaps.items()):
        with open(dest / f"event_{k:04d}_iter_{it:06d}.csv", "w", newline="") as fh:
            write_snapshot(fh, it, cset, header=True)
    print(f"initial layout + {len(snaps) - 1} resampling events -> {dest}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(f"{name}\t{preset_path(name)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinnbench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="train all seeds of one experiment config")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--jobs", type=int, help="parallel runs (default: $PINNBENCH_JOBS or 1)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run a base config over a list of values for one field")
    p.add_argument("--spec", required=True, help="sweep JSON with base, param, values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gendata", help="write observation data or reference tables")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, help="observation rows (navier_stokes, default 7000)")
    p.set_defaults(fn=cmd_gendata)

    p = sub.add_parser("snapshots", help="split a run's point snapshots into one CSV per event")
    p.add_argument("--run", required=True, help="run directory containing points.csv")
    p.set_defaults(fn=cmd_snapshots)

    p = sub.add_parser("presets", help="list the bundled experiment configs")
    p.set_defaults(fn=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
