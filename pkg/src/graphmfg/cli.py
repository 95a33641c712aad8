"""Command line runner: ``graphmfg run|sweep|validate``."""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .dynamics import integrate, metrics_record, pathwise_cost
from .measures import write_density_csv
from .models import Model, save_params
from .render import write_svg
from .training import TrainingAborted, terminal_residual, train

log = logging.getLogger("graphmfg")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2

SUMMARY_COLUMNS = [
    "config", "status", "n_nodes", "trailing_kinetic", "trailing_terminal",
    "trailing_kinetic_node_avg", "trailing_terminal_node_avg",
    "best_kinetic_node_avg", "best_terminal_node_avg", "error",
]


def _overrides(args) -> dict:
    return {"seed": args.seed, "optimizer": args.optimizer, "quadrature": args.quadrature}


def _out_dir(cfg: ScenarioConfig, out_dir: str | None) -> Path:
    if out_dir:
        return Path(out_dir)
    if cfg.out_dir:
        p = Path(cfg.out_dir)
        return p if p.is_absolute() else cfg.path.parent / p
    return Path("runs") / cfg.name


def _snapshot_steps(cfg: ScenarioConfig) -> list[int]:
    return sorted({min(cfg.M, max(0, int(round(t / cfg.dt)))) for t in cfg.snapshot_times})


def run_scenario(cfg: ScenarioConfig, out: Path) -> dict:
    """Train, evaluate the best parameters and write every artefact to ``out``.

    Returns the metrics record.  Raises :class:`TrainingAborted` after
    writing the partial report.
    """
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.build()
    g = sc.graph
    g.save(out / "graph.txt")
    write_density_csv(out / "mu0.csv", g, sc.mu0)
    if sc.muT is not None:
        write_density_csv(out / "muT.csv", g, sc.muT)
    log.info("%s: %d nodes, %d edges, T=%g, M=%d, %s/%s", cfg.name, g.n, g.m, cfg.T, cfg.M,
             cfg.model, cfg.train.optimizer)
    try:
        report = train(g, sc.mu0, sc.spec, cfg.model, cfg.train, cfg.dt, cfg.M, mu_T=sc.muT)
    except TrainingAborted as exc:
        exc.report.write_json(out / "train_report.json")
        raise
    report.write_json(out / "train_report.json")
    model = Model(cfg.model, g)
    save_params(out / "checkpoint_best.txt", cfg.model, cfg.train.seed, report.best_params)
    save_params(out / "checkpoint_final.txt", cfg.model, cfg.train.seed, report.final_params)

    s0 = np.asarray(model(report.best_params))
    traj = integrate(s0, sc.mu0, sc.spec, g, cfg.dt, cfg.M)
    cost = pathwise_cost(traj, sc.spec, cfg.train.quadrature)
    traj.write_csv(out / "trajectory.csv")
    summary = report.summary()
    metrics = metrics_record(traj, cost)
    metrics.update({
        "config": cfg.name,
        "n_nodes": g.n,
        "n_edges": g.m,
        "total": cost.total,
        "kinetic_node_avg": cost.kinetic / g.n,
        "terminal_node_avg": cost.terminal / g.n,
        "best_epoch": summary["best_epoch"],
        "best_kinetic_node_avg": summary["best_kinetic_node_avg"],
        "best_terminal_node_avg": summary["best_terminal_node_avg"],
        "trailing_window": summary["window"],
        "trailing_kinetic": summary["trailing_kinetic"],
        "trailing_terminal": summary["trailing_terminal"],
        "trailing_kinetic_node_avg": summary["trailing_kinetic_node_avg"],
        "trailing_terminal_node_avg": summary["trailing_terminal_node_avg"],
        "trailing_potentials": summary["trailing_potentials"],
        "final_loss": summary["final_loss"],
    })
    if sc.spec.target is not None:
        metrics["terminal_residual"] = terminal_residual(traj, sc.spec)
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)

    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for m in _snapshot_steps(cfg):
        t = m * cfg.dt
        write_svg(snaps / f"rho_m{m:04d}.svg", g, traj.rho[m], f"rho  t={t:g}")
        write_svg(snaps / f"S_m{m:04d}.svg", g, traj.s[m], f"S  t={t:g}")
    log.info("%s: kinetic %.6g, terminal %.6g, wrote %s", cfg.name, cost.kinetic, cost.terminal, out)
    return metrics


def _describe(cfg: ScenarioConfig) -> str:
    sc = cfg.build()
    head = (f"# {cfg.path}\n# graph: {sc.graph.n} nodes, {sc.graph.m} edges\n"
            f"# horizon: T={cfg.T!r} dt={cfg.dt!r} M={cfg.M}\n")
    return head + cfg.resolved()


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config, **_overrides(args))
        print(_describe(cfg), end="")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, **_overrides(args))
        if args.dry_run:
            print(_describe(cfg), end="")
            return EXIT_OK
        run_scenario(cfg, _out_dir(cfg, args.out_dir))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        last = exc.last_metrics
        if last is not None:
            print(f"last finite epoch: loss={last['total']!r} kinetic={last['kinetic']!r} "
                  f"terminal={last['terminal']!r}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _sweep_one(job) -> dict:
    path, out_root, overrides = job
    row = {"config": Path(path).stem, "status": "ok", "error": ""}
    try:
        cfg = load_config(path, **overrides)
        out = Path(out_root) / cfg.name
        run_scenario(cfg, out)
        # read back so the table reports exactly what the run recorded
        with open(out / "metrics.json") as fh:
            metrics = json.load(fh)
        for key in SUMMARY_COLUMNS:
            if key in metrics and key != "config":
                row[key] = metrics[key]
    except (ConfigError, TrainingAborted, OSError, ValueError, FloatingPointError) as exc:
        row["status"] = "failed"
        row["error"] = str(exc)
    return row


def sweep_workers(n_jobs: int) -> int:
    cap = os.environ.get("GRAPHMFG_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            log.warning("ignoring non-integer GRAPHMFG_THREADS=%r", cap)
    return max(1, min(limit, n_jobs))


def format_table(rows: list[dict]) -> str:
    def cell(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    cols = [c for c in SUMMARY_COLUMNS if any(c in r for r in rows)]
    grid = [cols] + [[cell(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in grid) for i in range(len(cols))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in grid]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def run_sweep(pattern: str, out_root: Path, overrides: dict | None = None) -> list[dict]:
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigError(f"no config matches {pattern!r}")
    overrides = overrides or {}
    jobs = [(p, str(out_root), overrides) for p in paths]
    workers = sweep_workers(len(jobs))
    if workers == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    (out_root / "summary.txt").write_text(format_table(rows))
    return rows


def cmd_sweep(args) -> int:
    try:
        if args.dry_run:
            paths = sorted(glob.glob(args.pattern))
            if not paths:
                raise ConfigError(f"no config matches {args.pattern!r}")
            for p in paths:
                cfg = load_config(p, **_overrides(args))
                print(f"{cfg.name}: T={cfg.T!r} dt={cfg.dt!r} M={cfg.M} model={cfg.model}")
            return EXIT_OK
        rows = run_sweep(args.pattern, Path(args.out_dir or "runs/sweep"), _overrides(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_table(rows), end="")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the training seed")
    common.add_argument("--out-dir", default=None, help="output directory")
    common.add_argument("--dry-run", action="store_true", help="validate and print, do not train")
    common.add_argument("--quadrature", choices=("left", "alg1"), default=None)
    common.add_argument("--optimizer", choices=("adam", "gd"), default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="graphmfg", description="Mean-field games on graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="train one scenario")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", parents=[common], help="run every config matching a glob")
    s.add_argument("pattern")
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("validate", parents=[common], help="check a config and print it resolved")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
