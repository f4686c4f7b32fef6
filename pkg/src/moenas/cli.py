"""Command-line entry point: ``moenas {search,cost,front,bench}``.

Run directory layout::

    config.snapshot        search configuration as given at creation
    checkpoints/gen-NNNNN  one JSON checkpoint per completed generation
    front.json             final archive sorted by first objective, descending
    history.csv            generation, hypervolume, best value per objective
    run.log                log of the run

Exit codes: 0 success, 2 configuration or input error, 3 I/O error,
4 evaluator failure, 5 checkpoint error. ``MOENAS_LOG_LEVEL`` sets the
console log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import genome as gen
from . import pareto
from .evaluation import EvaluatorError
from .evolution import (
    CheckpointError,
    ConfigError,
    SearchConfig,
    latest_checkpoint,
    run,
)
from .network import MacroConfig, network_cost, speed
from .problems import ZDT1_FRONT_HYPERVOLUME, ZDT1Problem, distance_to_zdt1_front

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EVALUATOR = 4
EXIT_CHECKPOINT = 5

SNAPSHOT = "config.snapshot"

log = logging.getLogger("moenas")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _setup_console_logging() -> None:
    level = os.environ.get("MOENAS_LOG_LEVEL", "WARNING").upper()
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    else:
        root.setLevel(level)


def _load_config(path: str) -> SearchConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CommandError(f"cannot read config {path}: {exc}", EXIT_CONFIG) from exc
    except json.JSONDecodeError as exc:
        raise CommandError(f"config {path} is not valid JSON: {exc}", EXIT_CONFIG) from exc
    try:
        return SearchConfig.from_dict(data)
    except ConfigError as exc:
        raise CommandError(f"invalid config: {exc}", EXIT_CONFIG) from exc


def objective_names(config: SearchConfig) -> list[str]:
    if config.problem == "zdt1":
        return list(ZDT1Problem.objectives)
    return list(config.objectives)


def front_rows(archive: list[dict]) -> list[dict]:
    """Archive entries (checkpoint dicts) sorted by first objective, descending."""
    return sorted(archive, key=lambda d: (-d["objectives"][0], d["id"]))


def write_front_json(path: Path, names: list[str], archive: list[dict]) -> None:
    points = [
        {"id": d["id"], "generation": d["generation"], "objectives": d["objectives"], "genome": d["genome"]}
        for d in front_rows(archive)
    ]
    _check_front(points)
    path.write_text(json.dumps({"objectives": names, "front": points}, indent=1) + "\n")


def _check_front(points: list[dict]) -> None:
    objs = [p["objectives"] for p in points]
    if objs and len(pareto.non_dominated(objs)) != len(objs):
        raise CommandError("archive contains dominated points", EXIT_CHECKPOINT)


def write_history_csv(path: Path, names: list[str], hv: list[float], best: list[list[float]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "hypervolume"] + [f"best_{n}" for n in names])
        for g, row in enumerate(best):
            w.writerow([g, repr(hv[g]) if g < len(hv) else ""] + [repr(v) for v in row])


# ---------------------------------------------------------------------------


def cmd_search(args) -> int:
    config = _load_config(args.config)
    out = Path(args.out)
    if args.resume:
        if not (out / SNAPSHOT).exists() or latest_checkpoint(out) is None:
            raise CommandError(f"nothing to resume in {out}", EXIT_CHECKPOINT)
    else:
        if out.exists() and any(out.iterdir()):
            raise CommandError(f"{out} is not empty; pass --resume to continue a run", EXIT_IO)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / SNAPSHOT).write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
        except OSError as exc:
            raise CommandError(f"cannot create run directory: {exc}", EXIT_IO) from exc

    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.INFO)
    pkg_log = logging.getLogger("moenas")
    pkg_log.addHandler(handler)
    old_level = pkg_log.level
    pkg_log.setLevel(logging.INFO)
    try:
        result = run(config, run_dir=out, resume=args.resume)
    except CheckpointError as exc:
        raise CommandError(str(exc), EXIT_CHECKPOINT) from exc
    except EvaluatorError as exc:
        raise CommandError(f"evaluator failure: {exc}", EXIT_EVALUATOR) from exc
    except OSError as exc:
        raise CommandError(f"I/O error: {exc}", EXIT_IO) from exc
    finally:
        pkg_log.removeHandler(handler)
        pkg_log.setLevel(old_level)
        handler.close()

    data = json.loads(latest_checkpoint(out).read_text())
    names = objective_names(config)
    write_front_json(out / "front.json", names, data["archive"])
    write_history_csv(out / "history.csv", names, result.state.hypervolume_history, result.state.best_history)
    print(json.dumps({
        "generations": result.state.generation,
        "archive_size": len(result.archive),
        "hypervolume": result.history[-1] if result.history else None,
        "front": str(out / "front.json"),
    }))
    return EXIT_OK


def cmd_cost(args) -> int:
    try:
        text = Path(args.genome).read_text()
    except OSError as exc:
        raise CommandError(f"cannot read genome file: {exc}", EXIT_IO) from exc
    try:
        g = gen.deserialize(text)
    except gen.GenomeError as exc:
        raise CommandError(f"invalid genome: {exc}", EXIT_CONFIG) from exc
    try:
        macro = MacroConfig(args.template, args.n, args.f, args.resolution, args.classes, not args.no_batchnorm)
        cost = network_cost(g, macro)
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_CONFIG) from exc
    print(json.dumps({**cost.to_dict(), "speed": speed(cost)}))
    return EXIT_OK


def _read_archive(path: Path) -> tuple[list[str] | None, list[dict]]:
    names = None
    if path.is_dir():
        snap = path / SNAPSHOT
        if snap.exists():
            names = objective_names(SearchConfig.from_dict(json.loads(snap.read_text())))
        ckpt = latest_checkpoint(path)
        if ckpt is None:
            raise CommandError(f"no checkpoint in {path}", EXIT_CHECKPOINT)
        path = ckpt
    try:
        data = json.loads(path.read_text())
        return names, data["archive"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CommandError(f"cannot read archive from {path}: {exc}", EXIT_CHECKPOINT) from exc


def cmd_front(args) -> int:
    names, archive = _read_archive(Path(args.path))
    rows = front_rows(archive)
    _check_front(rows)
    k = len(rows[0]["objectives"]) if rows else 0
    names = names or [f"f{i}" for i in range(k)]
    if args.format == "json":
        out = json.dumps({"objectives": names, "front": [
            {"id": d["id"], "generation": d["generation"], "objectives": d["objectives"], "genome": d["genome"]}
            for d in rows
        ]}, indent=1)
        print(out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "generation"] + names + ["genome"])
        for d in rows:
            genome_text = json.dumps(d["genome"], separators=(",", ":"))
            w.writerow([d["id"], d["generation"]] + [repr(v) for v in d["objectives"]] + [genome_text])
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def bench_report(problem: str, n_vars: int, generations: int, pop: int, seed: int,
                 mu_cross: float = 0.1, mu_mut: float = 0.1, parallelism: int = 1) -> dict:
    if problem != "zdt1":
        raise CommandError(f"unsupported benchmark problem {problem!r}", EXIT_CONFIG)
    try:
        config = SearchConfig(
            problem="zdt1", n_vars=n_vars, population_size=pop, max_generations=generations,
            plateau_window=generations + 1, mu_cross=mu_cross, mu_mut=mu_mut, seed=seed,
            parallelism=parallelism,
        )
    except ConfigError as exc:
        raise CommandError(f"invalid benchmark settings: {exc}", EXIT_CONFIG) from exc
    result = run(config)
    hv = result.history[-1]
    dist = distance_to_zdt1_front([ind.objectives for ind in result.archive])
    return {
        "problem": problem,
        "n_vars": n_vars,
        "generations": generations,
        "population": pop,
        "seed": seed,
        "archive_size": len(result.archive),
        "hypervolume": hv,
        "front_hypervolume": ZDT1_FRONT_HYPERVOLUME,
        "gap_percent": 100.0 * (ZDT1_FRONT_HYPERVOLUME - hv) / ZDT1_FRONT_HYPERVOLUME,
        "mean_distance": float(np.mean(dist)),
        "monotone": all(b >= a for a, b in zip(result.history, result.history[1:])),
    }


def cmd_bench(args) -> int:
    report = bench_report(args.problem, args.n_vars, args.generations, args.pop, args.seed,
                          args.mu_cross, args.mu_mut)
    print(json.dumps(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moenas", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run or resume an architecture search")
    s.add_argument("config", help="JSON search configuration")
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    s.set_defaults(func=cmd_search)

    c = sub.add_parser("cost", help="Mult-Adds, FLOPS, parameters and speed of a genome")
    c.add_argument("genome", help="genome file in canonical JSON form")
    c.add_argument("--template", default="cifar10", choices=["cifar10", "cifar", "imagenet"])
    c.add_argument("--n", type=int, default=2, help="normal cells per stack")
    c.add_argument("--f", type=int, default=32, help="filters of the first stack")
    c.add_argument("--resolution", type=int, default=None)
    c.add_argument("--classes", type=int, default=10)
    c.add_argument("--no-batchnorm", action="store_true", help="leave batch-norm out of the parameter count")
    c.set_defaults(func=cmd_cost)

    f = sub.add_parser("front", help="export the archive of a run directory or checkpoint")
    f.add_argument("path")
    f.add_argument("--format", choices=["json", "csv"], default="json")
    f.set_defaults(func=cmd_front)

    b = sub.add_parser("bench", help="validate the engine on a benchmark with a known front")
    b.add_argument("--problem", default="zdt1")
    b.add_argument("--n-vars", type=int, default=8)
    b.add_argument("--generations", type=int, default=100)
    b.add_argument("--pop", type=int, default=32)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--mu-cross", type=float, default=0.1)
    b.add_argument("--mu-mut", type=float, default=0.1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    _setup_console_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"moenas {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
