"""Command-line entry point: ``metric-causal {simulate,analyze,theorem1,example1}``.

Every run writes ``report.json`` (and ``table.csv`` for tables) into
``--out``. Outputs depend only on the configuration and the seed, so
repeating a run reproduces the files byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd

from ._backend import BACKEND
from .errors import IngestionError, MetricCausalError, ValidationError
from .estimands import StratifiedDataset, estimate_t_alpha
from .frechet import solve
from .geometry import (Euclidean, KendallShape, kendall_preshape, manifold_from_spec, preshape_to_landmarks,
                       read_landmarks_csv)
from .harness import (Example1Task, SimulationTask, parallel_map, replicate_rng, run_example1_replicate,
                      run_simulation_replicate, summarize_cell)
from .inference import bootstrap_pivotal_ci, randomization_test
from .matching import DEFAULT_CALIPER, stratify_by_matching
from .regression import theorem1_check
from .sampling import DEFAULT_SIGMA2, example1_naive_limit, random_two_group_dataset

DEFAULTS = {
    "simulate": {"scenarios": [1], "n": [32, 128, 1024], "replicates": 100, "sigma2": DEFAULT_SIGMA2,
                 "alpha": [2, 1], "bootstrap": 500, "level": 0.95, "caliper": DEFAULT_CALIPER},
    "analyze": {"alpha": [2, 1], "bootstrap": 500, "permutations": 1000, "level": 0.95,
                "caliper": DEFAULT_CALIPER, "euclidean_baseline": False, "seed": 0},
    "theorem1": {"manifolds": ["sphere2", "hyperbolic2", "euclidean:3"], "datasets": 50, "n": 40,
                 "alpha": [2, 1], "betas": [0.5, 0.3], "tolerance": 1e-4, "seed": 0},
    "example1": {"c": float(np.pi / 4), "n": 3000, "replicates": 20, "alpha": [2], "t_bound": 0.05,
                 "naive_band": 0.05, "seed": 0},
}


def package_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _schema(name):
    return json.loads(resources.files("metric_causal").joinpath("schemas", name).read_text())


def validate_config(command, config):
    """Check ``config`` against the schema of ``command``; raise ValidationError otherwise."""
    schema = _schema("config.schema.json")
    sub = {"$ref": f"#/$defs/{command}", "$defs": schema["$defs"]}
    try:
        jsonschema.validate(config, sub)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ValidationError(f"invalid {command} config at {where}: {exc.message}") from None


def validate_report(report):
    jsonschema.validate(report, _schema("report.schema.json"))


def _alpha_flag(value):
    return {"1": [1], "2": [2], "both": [2, 1]}[value]


def build_config(args):
    """Merge defaults, the config file and command-line flags (in increasing priority)."""
    config = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file {path} does not exist")
        try:
            config = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise ValidationError("config file must hold a JSON object")
    if args.replicates is not None:
        if args.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        config["datasets" if args.command == "theorem1" else "replicates"] = args.replicates
    if args.seed is not None:
        config["seed"] = args.seed
    if args.alpha is not None:
        config["alpha"] = _alpha_flag(args.alpha)
    if getattr(args, "bootstrap", None) is not None:
        config["bootstrap"] = args.bootstrap
    if getattr(args, "permutations", None) is not None:
        config["permutations"] = args.permutations
    if getattr(args, "euclidean_baseline", False):
        config["euclidean_baseline"] = True
    validate_config(args.command, config)
    if args.command == "simulate" and "seed" not in config:
        raise ValidationError("simulate requires a seed (--seed or the config file)")
    merged = {**DEFAULTS[args.command], **config}
    if args.command == "analyze":
        for key in ("units", "outcomes"):
            if not Path(merged[key]).is_file():
                raise ValidationError(f"{key} file {merged[key]} does not exist")
    return merged


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _clean(obj):
    """Plain-Python copy of ``obj`` suitable for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_report(out, command, config, results, diagnostics, passed=None, table=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "command": command,
        "provenance": {"config_hash": config_hash(config), "seed": int(config["seed"]),
                       "version": package_version(), "backend": BACKEND},
        "config": config,
        "results": results,
        "diagnostics": diagnostics,
    }
    if passed is not None:
        report["passed"] = bool(passed)
    report = _clean(report)
    validate_report(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if table is not None:
        with (out / "table.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["experiment_type", "estimator", "N", "estimate", "standard_error"])
            for row in table:
                writer.writerow([row["experiment_type"], row["estimator"], row["N"],
                                 repr(float(row["estimate"])), repr(float(row["standard_error"]))])
    return report


# -- simulate ----------------------------------------------------------------


def cmd_simulate(config, out, workers=None):
    """Run every (scenario, N) cell and tabulate MAE (designs 1, 3) or coverage (2, 4)."""
    results, table = [], []
    diagnostics = {"resamples": 0, "solver_failures": 0, "bootstrap_redraws": 0}
    alphas = tuple(config["alpha"])
    for scenario in config["scenarios"]:
        coverage = scenario in (2, 4)
        for n in config["n"]:
            tasks = [SimulationTask(scenario, n, rep, config["seed"], config["sigma2"], alphas,
                                    config["bootstrap"] if coverage else 0, config["level"],
                                    config["caliper"], config.get("lambda_policy"))
                     for rep in range(config["replicates"])]
            reps = parallel_map(run_simulation_replicate, tasks, workers)
            cell_resamples = sum(r["resamples"] for r in reps)
            cell_failures = sum(r["solver_failures"] for r in reps)
            diagnostics["resamples"] += cell_resamples
            diagnostics["solver_failures"] += cell_failures
            for alpha in alphas:
                mae = summarize_cell(reps, alpha, "mae")
                cell = {"experiment_type": scenario, "N": n, "alpha": alpha, "mae": mae,
                        "resamples": cell_resamples, "solver_failures": cell_failures}
                headline = mae
                if coverage:
                    cov = summarize_cell(reps, alpha, "coverage")
                    redraws = sum(r["intervals"][alpha]["redraws"] for r in reps)
                    diagnostics["bootstrap_redraws"] += redraws
                    cell.update(coverage=cov, bootstrap_redraws=redraws,
                                intervals=[[r["intervals"][alpha]["lower"], r["intervals"][alpha]["upper"]]
                                           for r in reps])
                    headline = cov
                results.append(cell)
                table.append({"experiment_type": scenario, "estimator": f"T{alpha}", "N": n,
                              "estimate": headline["estimate"], "standard_error": headline["standard_error"]})
    write_report(out, "simulate", config, results, diagnostics, table=table)
    return table


# -- analyze -----------------------------------------------------------------


def load_units(path):
    """Read ``id, z, covariates...``; categorical columns are one-hot encoded (first level dropped)."""
    frame = pd.read_csv(path, dtype={"id": str})
    missing = [c for c in ("id", "z") if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing column(s) {missing}")
    frame["id"] = frame["id"].str.strip()
    dup = sorted(frame["id"][frame["id"].duplicated()].unique())
    if dup:
        raise IngestionError(f"{path}: duplicated ids {dup}")
    bad = frame.index[frame.isna().any(axis=1)].tolist()
    if bad:
        raise IngestionError(f"{path}: missing values for ids {frame.loc[bad, 'id'].tolist()}")
    if not frame["z"].isin([0, 1]).all():
        raise IngestionError(f"{path}: z must be 0 or 1 (ids {frame.loc[~frame['z'].isin([0, 1]), 'id'].tolist()})")
    covariates = pd.get_dummies(frame.drop(columns=["id", "z"]), drop_first=True, dtype=float)
    return frame["id"].tolist(), frame["z"].to_numpy(int), covariates.to_numpy(float), list(covariates.columns)


def load_study(units_path, outcomes_path):
    """Join units and landmark outcomes by id into a single-stratum dataset on Kendall shape space."""
    ids, z, x, names = load_units(units_path)
    out_ids, landmarks = read_landmarks_csv(outcomes_path)
    if out_ids is None:
        raise IngestionError(f"{outcomes_path}: an id column is required")
    dup = sorted({i for i in out_ids if out_ids.count(i) > 1})
    if dup:
        raise IngestionError(f"{outcomes_path}: duplicated ids {dup}")
    only_units = sorted(set(ids) - set(out_ids))
    only_outcomes = sorted(set(out_ids) - set(ids))
    if only_units or only_outcomes:
        raise IngestionError(f"ids without outcomes: {only_units}; outcomes without units: {only_outcomes}")
    row = {i: k for k, i in enumerate(out_ids)}
    pre = kendall_preshape(landmarks[[row[i] for i in ids]])
    manifold = KendallShape(pre.shape[1])
    data = StratifiedDataset(manifold, z, np.ones(len(z), dtype=int), pre, np.array([1.0]), x, ids)
    return data, names


def euclidean_baseline(data: StratifiedDataset) -> StratifiedDataset:
    """Flatten preshapes to ``R^{2K}`` after rotating each onto the overall Fréchet mean."""
    m = data.manifold
    mean = solve(m, data.outcomes, np.full(len(data), 1.0 / len(data)), 2).minimizer
    aligned = m.align(mean, data.outcomes)[0]
    flat = preshape_to_landmarks(aligned).reshape(len(data), -1)
    return StratifiedDataset(Euclidean(flat.shape[1]), data.z, data.s, flat, data.lambda_hat,
                             data.covariates, data.ids)


def cmd_analyze(config, out):
    raw, names = load_study(config["units"], config["outcomes"])
    matched, match = stratify_by_matching(raw, config["caliper"])
    rng = replicate_rng(config["seed"])
    results = []
    failures = 0
    for alpha in config["alpha"]:
        est = estimate_t_alpha(matched, alpha)
        test = randomization_test(matched, alpha, config["permutations"], rng)
        ci = bootstrap_pivotal_ci(raw, alpha, config["bootstrap"], config["level"],
                                  rematch=lambda d: stratify_by_matching(d, config["caliper"])[0], rng=rng)
        failures += (not est.converged) + test.solver_failures + ci.solver_failures
        results.append({"analysis": "kendall", "alpha": alpha, "estimate": est.value,
                        "p_value": test.p_value, "exceedances": test.exceedances,
                        "interval": [ci.lower, ci.upper], "bootstrap_redraws": ci.redraws})
    if config["euclidean_baseline"]:
        flat = euclidean_baseline(matched)
        for alpha in config["alpha"]:
            est = estimate_t_alpha(flat, alpha)
            failures += not est.converged
            results.append({"analysis": "euclidean_baseline", "alpha": alpha, "estimate": est.value})
    diagnostics = {
        "solver_failures": failures,
        "units": len(raw), "treated": int(raw.z.sum()), "control": int(len(raw) - raw.z.sum()),
        "landmarks": raw.manifold.k_landmarks, "covariates": names,
        "matched_sets": match.n_sets, "matched_units": len(matched),
        "unmatched": {raw.ids[i]: why for i, why in sorted(match.unmatched.items())},
        "balance": match.balance_report, "caliper_width": match.caliper_width,
    }
    return write_report(out, "analyze", config, results, diagnostics)


# -- theorem 1 and example 1 ---------------------------------------------------


def cmd_theorem1(config, out):
    results = []
    passed = True
    for mi, spec in enumerate(config["manifolds"]):
        manifold = manifold_from_spec(spec)
        for alpha in config["alpha"]:
            gaps, spreads, starts = [], [], 0
            for k in range(config["datasets"]):
                rng = replicate_rng(config["seed"], mi, alpha, k)
                data = random_two_group_dataset(manifold, config["n"], rng)
                reports = [theorem1_check(data, alpha, beta, rng=rng) for beta in config["betas"]]
                gaps.append(max(r.gap for r in reports))
                norms = [r.norm_v for r in reports]
                spreads.append(max(norms) - min(norms))
                starts += sum(r.starts for r in reports)
            ok = max(gaps) <= config["tolerance"] and max(spreads) <= config["tolerance"]
            passed &= ok
            results.append({"manifold": spec, "alpha": alpha, "max_gap": max(gaps),
                            "max_beta_spread": max(spreads), "fits": starts, "passed": ok})
    write_report(out, "theorem1", config, results, {"solver_failures": 0}, passed)
    return passed, results


def cmd_example1(config, out, workers=None):
    limit = example1_naive_limit(config["c"])
    results = []
    passed = True
    failures = 0
    for alpha in config["alpha"]:
        tasks = [Example1Task(config["c"], config["n"], rep, config["seed"], alpha)
                 for rep in range(config["replicates"])]
        reps = parallel_map(run_example1_replicate, tasks, workers)
        failures += sum(not r["converged"] for r in reps)
        t_mean = float(np.mean([r["t_alpha"] for r in reps]))
        naive_mean = float(np.mean([r["naive"] for r in reps]))
        row = {"alpha": alpha, "mean_t_alpha": t_mean, "mean_naive": naive_mean}
        if alpha == 2:
            ok = t_mean <= config["t_bound"] and abs(naive_mean - limit) <= config["naive_band"]
            row.update(naive_limit=limit, passed=ok)
            passed &= ok
        results.append(row)
    write_report(out, "example1", config, results, {"solver_failures": failures}, passed)
    return passed, results


# -- entry point ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="metric-causal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("simulate", "simulated studies (MAE and coverage tables)"),
                            ("analyze", "Kendall-shape analysis of a units/outcomes CSV pair"),
                            ("theorem1", "regression-norm equals effect-estimate check"),
                            ("example1", "naive nested estimator negative control")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--alpha", choices=["1", "2", "both"])
        p.add_argument("--replicates", type=int)
        if name in ("simulate", "analyze"):
            p.add_argument("--bootstrap", type=int)
        if name == "analyze":
            p.add_argument("--permutations", type=int)
            p.add_argument("--euclidean-baseline", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "simulate":
            table = cmd_simulate(config, args.out)
            for row in table:
                print(f"type {row['experiment_type']}  {row['estimator']}  N={row['N']:<5d} "
                      f"{row['estimate']:.4f} ({row['standard_error']:.4f})")
            return 0
        if args.command == "analyze":
            report = cmd_analyze(config, args.out)
            for row in report["results"]:
                extra = f"  p={row['p_value']:.4f}" if "p_value" in row else ""
                print(f"{row['analysis']}  T{row['alpha']} = {row['estimate']:.5f}{extra}")
            return 0
        runner = cmd_theorem1 if args.command == "theorem1" else cmd_example1
        passed, results = runner(config, args.out)
        for row in results:
            print(json.dumps(_clean(row), sort_keys=True))
        print("PASS" if passed else "FAIL")
        return 0 if passed else 1
    except MetricCausalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
