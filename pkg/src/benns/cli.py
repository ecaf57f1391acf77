"""Command-line harness: ``benns <command> [--config PATH] [--seed N] [--mode M] [--out DIR]``.

Output layout under ``--out``::

    profiles/<vnf>.csv                 train-predictors reads these if present
    predictors/<vnf>_<resource>.model
    analysis/{cpu,memory,bandwidth}.csv, analysis/slopes.csv
    data/raw.csv, data/dataset.csv, data/summary.json
    surrogate/approximator.model, surrogate/mae.json
    evolve/<experiment>-<mode>/generations.csv, solution.json
    report/summary.csv, report/generations.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfg
from . import surrogate as sg
from .demand import DemandModel
from .errors import BennsError, InvalidArgumentError, MissingPredictorError
from .evolution import (
    FitnessSource,
    EvolutionConfig,
    EvolutionResult,
    GenerationLog,
    Problem,
    hybrid_evolve,
    measured_fitness,
    online_only_evolve,
)
from .netmodel import VnfType, build_fat_tree, decode_embedding, genome_shape, make_sfcrs
from .oracle import OracleConfig, SimulatedNetwork
from .predictors import GroundTruthUsage, PredictorSet, read_profile_csv, synth_profile, train_predictor, write_profile_csv, RESOURCES
from .traffic import linear_ramp

HYBRID = "hybrid"
ONLINE = "online"


def _dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _oracle(seed: int) -> SimulatedNetwork:
    return SimulatedNetwork(GroundTruthUsage(), OracleConfig(seed=seed))


def _load_predictors(out: Path, override: str | None) -> PredictorSet:
    directory = Path(override) if override else out / "predictors"
    if not directory.is_dir():
        raise MissingPredictorError(f"no predictor directory {directory}; run train-predictors first")
    return PredictorSet.load(directory)


# -- profiling and predictors ----------------------------------------------


def cmd_profile(out: Path, seed: int) -> list[Path]:
    d = _dir(out / "profiles")
    paths = []
    for vnf in VnfType:
        path = d / f"{vnf.value}.csv"
        write_profile_csv(synth_profile(vnf, seed), path)
        paths.append(path)
    return paths


def cmd_train_predictors(out: Path, seed: int) -> list[Path]:
    src = out / "profiles"
    preds = {}
    for vnf in VnfType:
        path = src / f"{vnf.value}.csv"
        profile = read_profile_csv(vnf, path) if path.exists() else synth_profile(vnf, seed)
        for resource in RESOURCES:
            preds[(vnf, resource)] = train_predictor(profile, resource, seed)
    return PredictorSet(preds).save(_dir(out / "predictors"))


# -- empirical analysis ----------------------------------------------------

ANALYSIS_ROUNDS = 5
ANALYSIS_RAMP = (0.0, 250.0, 120)
ANALYSIS_BASE = dict(cpus=64.0, memory_mb=64 * 1024.0, bandwidth_mbps=1e9, delay_ms=1.0)
ANALYSIS_LIMITS = {"cpu": ("cpus", 0.5), "memory": ("memory_mb", 1024.0), "bandwidth": ("bandwidth_mbps", 4.0)}
ANALYSIS_DEMAND = {"cpu": "alpha", "memory": "gamma", "bandwidth": "beta"}


@dataclass
class AnalysisResult:
    rows: dict[str, list[dict]]
    slopes: dict[str, float]


def cmd_analyze_demands(out: Path, seed: int, predictors_dir: str | None = None) -> AnalysisResult:
    """Constrain one resource at a time and record demand against oracle latency.

    One copy of each reference chain is placed entirely on host 1, next to the
    gateway host 0, so all four share the gateway uplink.
    """
    predictors = _load_predictors(out, predictors_dir)
    d = _dir(out / "analysis")
    sfcrs = make_sfcrs(4)
    traffic = linear_ramp(*ANALYSIS_RAMP)
    rows: dict[str, list[dict]] = {}
    slopes = {}
    for name, (param, limit) in ANALYSIS_LIMITS.items():
        res = dict(ANALYSIS_BASE, **{param: limit})
        topo = build_fat_tree(4, res["cpus"], res["memory_mb"], res["bandwidth_mbps"], res["delay_ms"])
        genome = np.zeros(genome_shape(sfcrs, topo), dtype=np.uint8)
        genome[:, 1] = 1
        embedding = decode_embedding(genome, sfcrs, topo)
        arrays = DemandModel(topo, sfcrs, predictors, traffic).evaluate_embedding(embedding)
        samples = arrays.samples([s.id for s in sfcrs])
        oracle = _oracle(seed)
        out_rows = []
        for rnd in range(ANALYSIS_ROUNDS):
            meas = oracle.measure_arrays(arrays, [s.id for s in sfcrs], key=(rnd,))
            lat = meas.latency_ms.ravel()
            for smp, value in zip(samples, lat):
                out_rows.append(dict(round=rnd, sfc=smp.sfc, slot=smp.slot, alpha=smp.alpha, gamma=smp.gamma,
                                     beta=smp.beta, delta_ms=smp.delta_ms, latency_ms=float(value)))
        rows[name] = out_rows
        x = np.array([r[ANALYSIS_DEMAND[name]] for r in out_rows])
        y = np.array([r["latency_ms"] for r in out_rows])
        slopes[name] = float(np.polyfit(x, y, 1)[0]) if np.ptp(x) > 0 else 0.0
        with open(d / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, ["round", "sfc", "slot", "alpha", "gamma", "beta", "delta_ms", "latency_ms"])
            w.writeheader()
            for r in out_rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    with open(d / "slopes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["experiment", "demand", "slope_ms_per_unit"])
        for name, slope in slopes.items():
            w.writerow([name, ANALYSIS_DEMAND[name], repr(slope)])
    return AnalysisResult(rows, slopes)


# -- surrogate -------------------------------------------------------------


@dataclass
class GenDataResult:
    raw: sg.RawRows
    dataset: sg.LatencyDataset

    @property
    def n_evaluations(self) -> int:
        return self.raw.n_evaluations


def cmd_gen_data(out: Path, seed: int, predictors_dir: str | None = None, evaluator=None) -> GenDataResult:
    predictors = _load_predictors(out, predictors_dir)
    evaluator = evaluator or _oracle(seed)
    raw = sg.generate_training_data(sg.DATA_GEN_EXPERIMENTS, sg.data_gen_sfcrs(), predictors, evaluator, seed)
    dataset = sg.preprocess(raw, seed=seed)
    d = _dir(out / "data")
    raw.write_csv(d / "raw.csv")
    dataset.write_csv(d / "dataset.csv")
    summary = {
        "evaluations": raw.n_evaluations,
        "experiments": len(sg.DATA_GEN_EXPERIMENTS),
        "embeddings_per_experiment": sg.DATA_GEN_EMBEDDINGS,
        "sfcrs_per_embedding": len(sg.data_gen_sfcrs()),
        "raw_rows": len(raw),
        "outliers_removed": dataset.n_outliers,
        "binned_rows": len(dataset),
        "split_counts": np.bincount(dataset.split, minlength=3).tolist(),
    }
    (d / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return GenDataResult(raw, dataset)


def cmd_train_surrogate(out: Path, seed: int, landscape_points: int = 0) -> tuple[sg.Approximator, sg.MaeReport]:
    path = out / "data" / "dataset.csv"
    if not path.exists():
        raise InvalidArgumentError(f"no dataset at {path}; run gen-data first")
    dataset = sg.LatencyDataset.read_csv(path)
    approx, report = sg.train_approximator(dataset, seed)
    d = _dir(out / "surrogate")
    approx.save(d / "approximator.model")
    doc = dict(report.as_dict(), best_epoch=report.history.best_epoch)
    (d / "mae.json").write_text(json.dumps(doc, indent=1) + "\n")
    if landscape_points:
        sg.fitness_landscape_scan(approx, landscape_points, seed=seed, path=d / "landscape.csv")
    return approx, report


# -- evolution -------------------------------------------------------------


def _slug(name: str) -> str:
    return name.lower().replace(" ", "-")


def run_dir(out: Path, spec: cfg.ExperimentSpec, mode: str) -> Path:
    return out / "evolve" / f"{_slug(spec.name)}-{mode}"


@dataclass
class EvolveOutcome:
    result: EvolutionResult
    approximated: tuple[float, float] | None
    measured: tuple[float, float]
    elapsed_s: float
    directory: Path

    @property
    def meets_threshold(self) -> bool:
        return self.result.converged


def cmd_evolve(
    out: Path,
    spec: cfg.ExperimentSpec,
    mode: str,
    seed: int | None = None,
    predictors_dir: str | None = None,
    approximator_path: str | None = None,
    population: int | None = None,
    generations: int | None = None,
    workers: int = 1,
) -> EvolveOutcome:
    if mode not in (HYBRID, ONLINE):
        raise InvalidArgumentError(f"mode must be {HYBRID} or {ONLINE}")
    seed = spec.seeds[0] if seed is None else seed
    defaults = EvolutionConfig() if mode == HYBRID else EvolutionConfig(population_size=10, max_generations=10)
    config = EvolutionConfig(
        population_size=population or defaults.population_size,
        max_generations=defaults.max_generations if generations is None else generations,
        seed=seed,
        workers=workers,
    )
    problem = Problem(spec.topology(), spec.sfcrs(), spec.traffic.series())
    oracle = _oracle(seed)
    apath = Path(approximator_path) if approximator_path else out / "surrogate" / "approximator.model"
    surrogate = None
    if apath.exists():
        predictors = _load_predictors(out, predictors_dir)
        dm = DemandModel(problem.topology, problem.graphs, predictors, problem.traffic)
        surrogate = sg.Surrogate(sg.Approximator.load(apath), dm)
    elif mode == HYBRID:
        raise InvalidArgumentError(f"no approximator at {apath}; run train-surrogate first")

    start = time.perf_counter()
    if mode == HYBRID:
        result = hybrid_evolve(config, surrogate, oracle, problem)
    else:
        result = online_only_evolve(config, oracle, problem)
    elapsed = time.perf_counter() - start

    best = result.best
    approximated = best.approximated
    if approximated is None and surrogate is not None:
        ar, lat = surrogate.evaluate([best.genome])[0]
        approximated = (float(ar), float(lat))
    measured = best.measured
    if best.source != FitnessSource.MEASURED:
        # final check of an unconverged hybrid run; outside the GA's counters
        measured = measured_fitness(oracle, problem, best.genome, (seed, result.generations + 1, 0))

    d = _dir(run_dir(out, spec, mode))
    result.log.write_csv(d / "generations.csv")
    embedding = problem.decode(best.genome)
    solution = {
        "experiment": spec.name,
        "mode": mode,
        "seed": seed,
        "converged": result.converged,
        "generations": result.generations,
        "population_size": config.population_size,
        "offline_evals": result.offline_evals,
        "online_evals": result.online_evals,
        "explored": result.explored,
        "elapsed_s": round(elapsed, 3),
        "fitness_approximated": list(approximated) if approximated else None,
        "fitness_measured": list(measured),
        "threshold": {"min_ar": config.min_ar, "max_latency_ms": config.max_latency_ms},
        "traffic_slots": len(problem.traffic),
        "seconds_per_hour_compressed": spec.traffic.seconds_per_hour if spec.traffic.kind == cfg.TRACE else None,
        "placement": [
            {"sfc": e.request.id, "chain": [v.value for v in e.request.chain], "deployed": e.deployed,
             "hosts": list(e.placement)}
            for e in embedding.sfcs
        ],
        "genome": ["".join(str(int(b)) for b in row) for row in best.genome],
        "spec": spec.to_dict(),
    }
    (d / "solution.json").write_text(json.dumps(solution, indent=1) + "\n")
    return EvolveOutcome(result, approximated, measured, elapsed, d)


# -- report ----------------------------------------------------------------

REPORT_HEADER = [
    "experiment", "mode", "converged", "explored", "offline_evals", "online_evals", "generations",
    "elapsed_s", "ar_measured", "latency_measured_ms", "latency_approximated_ms",
]


def cmd_report(out: Path) -> list[dict]:
    runs = sorted((out / "evolve").glob("*/solution.json")) if (out / "evolve").is_dir() else []
    if not runs:
        raise InvalidArgumentError(f"no evolution logs under {out / 'evolve'}")
    d = _dir(out / "report")
    rows = []
    with open(d / "generations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["experiment", "mode", "gen", "phase", "ar_min", "ar_mean", "ar_max",
                    "lat_min", "lat_mean", "lat_max", "offline_evals", "online_evals"])
        for path in runs:
            sol = json.loads(path.read_text())
            approx = sol["fitness_approximated"]
            rows.append({
                "experiment": sol["experiment"],
                "mode": sol["mode"],
                "converged": sol["converged"],
                "explored": sol["offline_evals"] + sol["online_evals"],
                "offline_evals": sol["offline_evals"],
                "online_evals": sol["online_evals"],
                "generations": sol["generations"],
                "elapsed_s": sol["elapsed_s"],
                "ar_measured": sol["fitness_measured"][0],
                "latency_measured_ms": sol["fitness_measured"][1],
                "latency_approximated_ms": approx[1] if approx else "",
            })
            log_path = path.parent / "generations.csv"
            if not log_path.exists():
                raise InvalidArgumentError(f"missing generation log {log_path}")
            for r in GenerationLog.read_csv(log_path).rows:
                w.writerow([sol["experiment"], sol["mode"], r.gen, r.phase, *r.ar, *r.lat, r.offline_evals, r.online_evals])
    with open(d / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, REPORT_HEADER)
        w.writeheader()
        w.writerows(rows)
    return rows


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="benns", description="Surrogate-assisted SFC embedding experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="runs", help="output directory (default: runs)")
    common.add_argument("--seed", type=int, default=None, help="random seed (default: 0, or the experiment's first seed)")
    common.add_argument("--predictors", default=None, help="predictor directory (default: OUT/predictors)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("profile", parents=[common], help="write synthetic VNF profiles")
    sub.add_parser("train-predictors", parents=[common], help="train the 14 CPU/memory predictors")
    sub.add_parser("analyze-demands", parents=[common], help="demand-vs-latency analysis with one constrained resource")
    sub.add_parser("gen-data", parents=[common], help="measure 220 random embeddings and build the dataset")
    p = sub.add_parser("train-surrogate", parents=[common], help="train the latency approximator")
    p.add_argument("--landscape", type=int, default=0, metavar="N", help="also score N random (alpha, beta) points")
    p = sub.add_parser("evolve", parents=[common], help="run hybrid or online-only evolution")
    p.add_argument("--config", required=True, help=f"preset ({', '.join(cfg.PRESET_NAMES)}) or YAML path")
    p.add_argument("--mode", choices=(HYBRID, ONLINE), default=HYBRID)
    p.add_argument("--approximator", default=None, help="approximator model (default: OUT/surrogate/approximator.model)")
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    sub.add_parser("report", parents=[common], help="aggregate evolution runs into comparison tables")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    seed = 0 if args.seed is None else args.seed
    if args.command == "profile":
        paths = cmd_profile(out, seed)
        print(f"wrote {len(paths)} profiles to {out / 'profiles'}")
    elif args.command == "train-predictors":
        paths = cmd_train_predictors(out, seed)
        print(f"wrote {len(paths)} predictors to {out / 'predictors'}")
    elif args.command == "analyze-demands":
        res = cmd_analyze_demands(out, seed, args.predictors)
        for name, slope in res.slopes.items():
            print(f"{name}: {len(res.rows[name])} rows, latency slope {slope:.4g} ms per unit {ANALYSIS_DEMAND[name]}")
    elif args.command == "gen-data":
        res = cmd_gen_data(out, seed, args.predictors)
        print(f"evaluations: {res.n_evaluations}")
        print(f"raw rows: {len(res.raw)}, outliers removed: {res.dataset.n_outliers}, binned rows: {len(res.dataset)}")
    elif args.command == "train-surrogate":
        _, report = cmd_train_surrogate(out, seed, args.landscape)
        for key, value in report.as_dict().items():
            print(f"{key}: {value:.4f}" if isinstance(value, float) else f"{key}: {value}")
    elif args.command == "evolve":
        spec = cfg.resolve(args.config)
        res = cmd_evolve(out, spec, args.mode, args.seed, args.predictors, args.approximator,
                         args.population, args.generations, args.workers)
        r = res.result
        print(f"{spec.name} [{args.mode}] converged={r.converged} generations={r.generations} "
              f"offline_evals={r.offline_evals} online_evals={r.online_evals} elapsed_s={res.elapsed_s:.1f}")
        if res.approximated:
            print(f"approximated: ar={res.approximated[0]:.4f} latency_ms={res.approximated[1]:.3f}")
        print(f"measured: ar={res.measured[0]:.4f} latency_ms={res.measured[1]:.3f}")
        print(f"wrote {res.directory}")
    elif args.command == "report":
        rows = cmd_report(out)
        for r in rows:
            print(f"{r['experiment']:>16} {r['mode']:>6} converged={r['converged']} explored={r['explored']}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except BennsError as exc:
        message = exc.args[0] if exc.args else str(exc)
        print(json.dumps({"error": exc.kind, "message": str(message)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
