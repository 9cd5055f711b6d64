"""``offtrace`` command line: garnet-gen, run, grid, bench, oracle-check."""
from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import checks, experiments, seeding
from .garnet import GarnetSpec
from .learners import ALGORITHMS, Hyper
from .problems import garnet_problem, load_problem, save_problem

log = logging.getLogger("offtrace")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"{path} is not valid JSON: {exc}") from None


def _out_dir(ctx, out_dir):
    path = Path(out_dir or ctx.obj["out_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(ctx, seed):
    return ctx.obj["seed"] if seed is None else seed


seed_option = click.option("--seed", type=int, default=None, help="Master seed (overrides the global one).")
out_option = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                          help="Output directory (overrides the global one).")


def garnet_options(f):
    f = click.option("--states", "n_states", type=int, default=30, show_default=True)(f)
    f = click.option("--actions", "n_actions", type=int, default=4, show_default=True)(f)
    f = click.option("--branching", type=int, default=2, show_default=True)(f)
    f = click.option("--features", "n_features", type=int, default=8, show_default=True)(f)
    f = click.option("--gamma", type=float, default=0.95, show_default=True)(f)
    f = click.option("--off-policy/--on-policy", default=False, show_default=True)(f)
    return f


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--seed", type=int, default=0, show_default=True, help="Global master seed.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="results", show_default=True)
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, seed, out_dir, verbose):
    """Off-policy linear value estimation with eligibility traces."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"seed": seed, "out_dir": out_dir}


@main.command("garnet-gen")
@garnet_options
@seed_option
@out_option
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None,
              help="Problem file (default: <out-dir>/problem.json).")
@click.pass_context
def garnet_gen(ctx, n_states, n_actions, branching, n_features, gamma, off_policy, seed, out_dir, out_file):
    """Generate a Garnet problem and its target/behavior policies as JSON."""
    seed = _seed(ctx, seed)
    try:
        spec = GarnetSpec(n_states, n_actions, branching, n_features, seed)
        problem = garnet_problem(spec, off_policy, gamma)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    out = _out_dir(ctx, out_dir)
    path = Path(out_file) if out_file else out / "problem.json"
    save_problem(problem, path)
    experiments.write_config(out, {"command": "garnet-gen", **problem.provenance}, "config_garnet_gen.json")
    click.echo(str(path))


@main.command("run")
@click.option("--algo", required=True, help=f"One of: {', '.join(ALGORITHMS)}.")
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True)
@click.option("--alpha0", type=float, default=0.1, show_default=True)
@click.option("--alphac", type=float, default=1e3, show_default=True)
@click.option("--beta0", type=float, default=0.1, show_default=True)
@click.option("--betac", type=float, default=1e3, show_default=True)
@click.option("--steps", type=int, default=10_000, show_default=True)
@click.option("--problem", "problem_file", type=click.Path(dir_okay=False), default=None,
              help="Serialized problem; a Garnet is generated from the flags otherwise.")
@garnet_options
@seed_option
@out_option
@click.pass_context
def run_cmd(ctx, algo, lam, alpha0, alphac, beta0, betac, steps, problem_file,
            n_states, n_actions, branching, n_features, gamma, off_policy, seed, out_dir):
    """Run one algorithm on one trajectory and write its error curve."""
    if algo not in ALGORITHMS:
        raise click.BadParameter(f"unknown algorithm {algo!r}; valid names: {', '.join(ALGORITHMS)}",
                                 param_hint="--algo")
    seed = _seed(ctx, seed)
    try:
        hyper = Hyper(lam, alpha0, alphac, beta0, betac)
        if problem_file:
            if not Path(problem_file).is_file():
                raise click.ClickException(f"problem file not found: {problem_file}")
            problem = load_problem(problem_file)
        else:
            problem = garnet_problem(GarnetSpec(n_states, n_actions, branching, n_features, seed),
                                     off_policy, gamma)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    traj_seed = seeding.derive_seed(seed, "trajectory", 0)
    result = experiments.run_single(problem, algo, hyper, steps, traj_seed)
    out = _out_dir(ctx, out_dir)
    path = out / f"curve_{algo}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "error"])
        for i, e in enumerate(result.curve, 1):
            w.writerow([i, format(float(e), ".10g")])
    experiments.write_config(out, {
        "command": "run", "algorithm": algo, "lambda": lam, "alpha0": alpha0, "alphac": alphac,
        "beta0": beta0, "betac": betac, "steps": steps, "seed": seed, "trajectory_seed": traj_seed,
        "problem": problem_file or problem.provenance,
    }, f"config_run_{algo}.json")
    click.echo(f"{algo}: err={result.err:.6g} diverged={result.diverged} -> {path}")


def _spec_from(ctx, config, seed, **overrides):
    data = _load_json(config) if config else {}
    if seed is not None or "seed" not in data:
        data["seed"] = _seed(ctx, seed)
    try:
        spec = experiments.ExperimentSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad experiment config: {exc}") from None
    return experiments.with_overrides(spec, **overrides)


def _log_spec(out, command, spec, extra=None):
    payload = {"command": command, "spec": spec.to_dict(), "spec_hash": spec.digest(),
               "grid_instance_seed": seeding.derive_seed(spec.seed, "instance", 0)}
    experiments.write_config(out, {**payload, **(extra or {})}, f"config_{command}.json")


@main.command("grid")
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="Experiment spec (JSON).")
@click.option("--setting", type=click.Choice(sorted(experiments.SETTINGS)), default=None,
              help="Start from a predefined problem size and on/off-policy flag.")
@seed_option
@out_option
@click.pass_context
def grid_cmd(ctx, config, setting, seed, out_dir):
    """Grid search of meta-parameters on one instance; writes grid_best.csv and lambda_sensitivity.csv."""
    spec = _spec_from(ctx, config, seed, **(experiments.SETTINGS[setting] if setting else {}))
    out = experiments.results_dir(_out_dir(ctx, out_dir), spec)
    _log_spec(out, "grid", spec)
    result = experiments.grid_search(spec)
    experiments.write_grid(out, result)
    for name, (h, err, div) in result.best.items():
        click.echo(f"{name:5s} lambda={h.lam:g} err={err:.4g}{' (all diverged)' if div else ''}")
    click.echo(str(out))


@main.command("bench")
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="Experiment spec (JSON).")
@click.option("--setting", type=click.Choice(sorted(experiments.SETTINGS)), default=None)
@click.option("--hypers", default=None,
              help="grid_best.csv path, or a setting name to use the published meta-parameters.")
@click.option("--instances", type=int, default=None)
@click.option("--steps", type=int, default=None)
@seed_option
@out_option
@click.pass_context
def bench_cmd(ctx, config, setting, hypers, instances, steps, seed, out_dir):
    """Benchmark fixed meta-parameters over fresh instances; writes mean/std curves."""
    spec = _spec_from(ctx, config, seed, n_instances=instances, bench_steps=steps,
                      **(experiments.SETTINGS[setting] if setting else {}))
    source = hypers or setting
    if source is None:
        raise click.UsageError("give --hypers (CSV or setting name) or --setting")
    if source in experiments.PAPER_HYPERS:
        table = experiments.PAPER_HYPERS[source]
    else:
        if not Path(source).is_file():
            raise click.ClickException(f"meta-parameter file not found: {source}")
        table = experiments.read_hypers(source)
    try:
        result = experiments.benchmark(spec, table)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    out = experiments.results_dir(_out_dir(ctx, out_dir), spec)
    _log_spec(out, "bench", spec, {
        "hypers": {a: experiments.hyper_cells(a, table[a]) for a in spec.algorithms},
        "instance_seeds": [seeding.derive_seed(spec.seed, "instance", i) for i in range(1, spec.n_instances + 1)],
    })
    experiments.write_bench(out, spec, result)
    for a in spec.algorithms:
        fin = result.final[a]
        click.echo(f"{a:5s} mean final err={fin.mean() if fin.size else np.nan:.4g} ({result.counts[a]} instances)")
    click.echo(str(out))


@main.command("oracle-check")
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="Oracle config (JSON).")
@seed_option
@out_option
@click.pass_context
def oracle_check(ctx, config, seed, out_dir):
    """Run the oracle suite and write report.json; exits 1 if any property fails."""
    data = _load_json(config) if config else {}
    if seed is not None or "seed" not in data:
        data["seed"] = _seed(ctx, seed)
    try:
        cfg = checks.OracleConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad oracle config: {exc}") from None
    verdicts = checks.run_suite(cfg)
    out = _out_dir(ctx, out_dir)
    experiments.write_config(out, {"command": "oracle-check", **cfg.to_dict()}, "config_oracle_check.json")
    report = {"config": cfg.to_dict(), "passed": checks.all_passed(verdicts), "verdicts": verdicts}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    for v in verdicts:
        click.echo(f"{v['status']:>16s}  {v['property']}")
    if not report["passed"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
