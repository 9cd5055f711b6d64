"""Benchmark protocol on Garnet problems.

A grid search picks meta-parameters on one problem instance from 10
shared trajectories; a benchmark then replays fixed meta-parameters on many
fresh instances and aggregates the value-error curves.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import seeding
from .exceptions import ChainError, SingularUpdateError
from .garnet import GarnetSpec
from .learners import ALGORITHMS, GRADIENT, TWO_TIMESCALE, Hyper, make_learner
from .problems import Problem, garnet_problem, instance_spec
from .sampling import Trajectory, sample_trajectory

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
WORKERS_ENV = "OFFTRACE_WORKERS"


@dataclass(frozen=True)
class Grid:
    lambdas: tuple = (0.0, 0.4, 0.7, 0.9, 1.0)
    alpha0s: tuple = (1e-2, 1e-1, 1.0)
    alphacs: tuple = (1e1, 1e2, 1e3)
    beta0s: tuple = (1e-2, 1e-1, 1.0)
    betacs: tuple = (1e1, 1e2, 1e3)

    def points(self, algorithm: str) -> list[Hyper]:
        """Every meta-parameter combination ``algorithm`` actually uses, in ascending order."""
        if algorithm in TWO_TIMESCALE:
            axes = (self.lambdas, self.alpha0s, self.alphacs, self.beta0s, self.betacs)
            return [Hyper(l, a0, ac, b0, bc) for l, a0, ac, b0, bc in itertools.product(*map(sorted, axes))]
        if algorithm in GRADIENT:
            axes = (self.lambdas, self.alpha0s, self.alphacs)
            return [Hyper(l, a0, ac) for l, a0, ac in itertools.product(*map(sorted, axes))]
        return [Hyper(l) for l in sorted(self.lambdas)]


@dataclass(frozen=True)
class ExperimentSpec:
    n_states: int = 30
    n_actions: int = 4
    branching: int = 2
    n_features: int = 8
    off_policy: bool = False
    gamma: float = 0.95
    n_trajectories: int = 10
    n_steps: int = 10_000
    n_instances: int = 100
    bench_steps: int = 100_000
    algorithms: tuple = ALGORITHMS
    grid: Grid = field(default_factory=Grid)
    seed: int = 0

    def __post_init__(self):
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}; valid names: {', '.join(ALGORITHMS)}")
        if self.n_steps < 2 or self.bench_steps < 1:
            raise ValueError("trajectories are too short")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))

    def garnet(self, seed: int = 0) -> GarnetSpec:
        return GarnetSpec(self.n_states, self.n_actions, self.branching, self.n_features, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["grid"] = {k: list(v) for k, v in d["grid"].items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if "grid" in data:
            grid = data["grid"]
            bad = set(grid) - set(Grid.__dataclass_fields__)
            if bad:
                raise ValueError(f"unknown grid axes: {sorted(bad)}")
            data["grid"] = Grid(**{k: tuple(float(x) for x in v) for k, v in grid.items()})
        if "algorithms" in data:
            data["algorithms"] = tuple(data["algorithms"])
        return cls(**data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def load_spec(path: str | Path) -> ExperimentSpec:
    return ExperimentSpec.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class RunResult:
    curve: np.ndarray
    err: float
    hyper: Hyper
    diverged: bool


# ------------------------------------------------------------------ single runs

def error_curve(thetas: np.ndarray, phi: np.ndarray, v_true: np.ndarray) -> np.ndarray:
    """||Phi theta_i - V||_2 for every row theta_i."""
    with np.errstate(all="ignore"):
        return np.linalg.norm(thetas @ phi.T - v_true, axis=1)


def is_diverged(thetas: np.ndarray) -> bool:
    """Any non-finite entry, or any ||theta_i|| above 1e12."""
    if not np.isfinite(thetas).all():
        return True
    with np.errstate(over="ignore"):
        return bool((np.linalg.norm(thetas, axis=1) > DIVERGENCE_NORM).any())


def err_metric(thetas_per_traj, phi: np.ndarray, v_true: np.ndarray) -> float:
    """Mean over trajectories of the mean value error over the second half of each curve.

    For curves of length 10^4 the window is steps 5001..10^4 (5000 terms).
    """
    per_traj = []
    for thetas in thetas_per_traj:
        thetas = np.asarray(thetas, dtype=float)
        half = thetas.shape[0] // 2
        per_traj.append(error_curve(thetas[half:], phi, v_true).mean())
    return float(np.mean(per_traj))


def run_learner(name: str, hyper: Hyper, traj: Trajectory) -> tuple[np.ndarray, bool]:
    """theta_1..theta_n of one learner; a singular update counts as divergence."""
    learner = make_learner(name, traj.n_features, traj.gamma, hyper)
    try:
        with np.errstate(all="ignore"):
            thetas = learner.run(traj)
    except SingularUpdateError:
        return np.full((len(traj), traj.n_features), np.nan), True
    return thetas, is_diverged(thetas)


def run_single(problem: Problem, name: str, hyper: Hyper, n_steps: int, seed: int) -> RunResult:
    traj = sample_trajectory(problem.mdp, problem.behavior, problem.target, problem.features,
                             n_steps, seed=seed, start="uniform")
    thetas, diverged = run_learner(name, hyper, traj)
    v = problem.v_true
    curve = error_curve(thetas, problem.features.phi, v)
    err = np.inf if diverged else err_metric([thetas], problem.features.phi, v)
    return RunResult(curve, float(err), hyper, diverged)


# ------------------------------------------------------------------ worker pool

def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


_SHARED: dict = {}


def _install(shared):
    _SHARED.clear()
    _SHARED.update(shared)


def _map(fn, tasks, shared, workers):
    """Ordered map; results come back in task order whatever the scheduling."""
    if workers <= 1 or len(tasks) <= 1:
        _install(shared)
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(workers, initializer=_install, initargs=(shared,)) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ------------------------------------------------------------------ grid search

@dataclass(frozen=True, eq=False)
class GridResult:
    rows: list  # (algorithm, Hyper, err, diverged)
    best: dict  # algorithm -> (Hyper, err, all_diverged)
    problem: Problem


def _grid_task(task):
    name, hyper = task
    phi, v = _SHARED["phi"], _SHARED["v"]
    runs = []
    for traj in _SHARED["trajs"]:
        thetas, diverged = run_learner(name, hyper, traj)
        if diverged:
            return name, hyper, np.inf, True
        runs.append(thetas)
    return name, hyper, err_metric(runs, phi, v), False


def _tie_key(row):
    _, h, err, _ = row
    return (err, h.lam, h.a0, h.ac, h.b0, h.bc)


def grid_problem(spec: ExperimentSpec) -> Problem:
    return garnet_problem(instance_spec(spec.garnet(), spec.seed, 0), spec.off_policy, spec.gamma)


def shared_trajectories(spec: ExperimentSpec, problem: Problem) -> list[Trajectory]:
    base = problem.provenance["seed"]
    return [
        sample_trajectory(problem.mdp, problem.behavior, problem.target, problem.features,
                          spec.n_steps, seed=seeding.derive_seed(base, "trajectory", d), start="uniform")
        for d in range(spec.n_trajectories)
    ]


def grid_search(spec: ExperimentSpec, workers: int | None = None, problem: Problem | None = None) -> GridResult:
    """Score every grid point of every algorithm on the same shared trajectories.

    The winner minimises err; ties go to the smaller lambda, then the smaller
    alpha0 (then alpha_c, beta0, beta_c). A diverged point scores +inf.
    """
    problem = problem or grid_problem(spec)
    trajs = shared_trajectories(spec, problem)
    shared = {"trajs": trajs, "phi": problem.features.phi, "v": problem.v_true}
    tasks = [(name, h) for name in spec.algorithms for h in spec.grid.points(name)]
    rows = _map(_grid_task, tasks, shared, worker_count() if workers is None else workers)
    best = {}
    for name in spec.algorithms:
        mine = [r for r in rows if r[0] == name]
        win = min(mine, key=_tie_key)
        all_div = all(r[3] for r in mine)
        if all_div:
            log.warning("every grid point diverged for %s", name)
        best[name] = (win[1], win[2], all_div)
    return GridResult(rows, best, problem)


def lambda_sensitivity(result: GridResult) -> list[tuple[str, float, float]]:
    """(algorithm, lambda, best err over the remaining axes)."""
    out = {}
    for name, h, err, _ in result.rows:
        key = (name, h.lam)
        out[key] = min(out.get(key, np.inf), err)
    return [(name, lam, err) for (name, lam), err in out.items()]


# ------------------------------------------------------------------ benchmark

@dataclass(frozen=True, eq=False)
class BenchResult:
    mean: dict  # algorithm -> curve
    std: dict
    final: dict  # algorithm -> final error per successful instance
    counts: dict
    failures: list  # (instance, algorithm, reason)


def _bench_task(index):
    spec, hypers = _SHARED["spec"], _SHARED["hypers"]
    try:
        problem = garnet_problem(instance_spec(spec.garnet(), spec.seed, index), spec.off_policy, spec.gamma)
        traj = sample_trajectory(
            problem.mdp, problem.behavior, problem.target, problem.features, spec.bench_steps,
            seed=seeding.derive_seed(problem.provenance["seed"], "trajectory", 0), start="uniform",
        )
        v = problem.v_true
    except (ChainError, ValueError, np.linalg.LinAlgError) as exc:
        return index, {}, [(index, "*", f"{type(exc).__name__}: {exc}")]
    curves, failures = {}, []
    for name in spec.algorithms:
        thetas, diverged = run_learner(name, hypers[name], traj)
        curve = error_curve(thetas, problem.features.phi, v)
        if not np.isfinite(curve).all():
            failures.append((index, name, "diverged"))
            continue
        curves[name] = curve
    return index, curves, failures


def benchmark(spec: ExperimentSpec, hypers: dict, workers: int | None = None) -> BenchResult:
    """Fresh instance per index 1..n_instances; all algorithms share its one trajectory.

    Instances whose curve for an algorithm is not finite are recorded as
    failures and left out of that algorithm's mean/std (population std).
    """
    missing = [a for a in spec.algorithms if a not in hypers]
    if missing:
        raise ValueError(f"no meta-parameters for {missing}")
    tasks = list(range(1, spec.n_instances + 1))
    results = _map(_bench_task, tasks, {"spec": spec, "hypers": hypers},
                   worker_count() if workers is None else workers)
    n = spec.bench_steps
    s1 = {a: np.zeros(n) for a in spec.algorithms}
    s2 = {a: np.zeros(n) for a in spec.algorithms}
    counts = {a: 0 for a in spec.algorithms}
    final = {a: [] for a in spec.algorithms}
    failures = []
    for _, curves, fails in results:  # in instance order
        failures.extend(fails)
        for a, c in curves.items():
            s1[a] += c
            s2[a] += c * c
            counts[a] += 1
            final[a].append(c[-1])
    mean, std = {}, {}
    for a in spec.algorithms:
        k = counts[a]
        if k == 0:
            mean[a] = std[a] = np.full(n, np.nan)
            continue
        mean[a] = s1[a] / k
        std[a] = np.sqrt(np.maximum(s2[a] / k - mean[a] ** 2, 0.0))
    return BenchResult(mean, std, {a: np.array(v) for a, v in final.items()}, counts, failures)


# ------------------------------------------------------------------ meta-parameters selected on the single instances

def _h(lam, a0=None, ac=None, b0=None, bc=None):
    kw = {k: v for k, v in dict(a0=a0, ac=ac, b0=b0, bc=bc).items() if v is not None}
    return Hyper(lam, **kw)


PAPER_HYPERS = {
    "small-on": {
        "lstd": _h(0.9), "lspe": _h(0.9), "fpkf": _h(1.0), "brm": _h(0.9),
        "td": _h(0.0, 1e-1, 1e3), "gbrm": _h(0.7, 1e-1, 1e2),
        "tdc": _h(0.9, 1e-1, 1e3, 1e-1, 1e3), "gtd2": _h(0.7, 1e-1, 1e3, 1e-1, 1e3),
    },
    "big-on": {
        "lstd": _h(0.4), "lspe": _h(0.7), "fpkf": _h(1.0), "brm": _h(0.9),
        "td": _h(0.4, 1e-1, 1e3), "gbrm": _h(0.9, 1e-1, 1e3),
        "tdc": _h(0.9, 1e-1, 1e3, 1e-1, 1e3), "gtd2": _h(0.9, 1e-2, 1e3, 1e-1, 1e3),
    },
    "small-off": {
        "lstd": _h(0.0), "lspe": _h(0.0), "fpkf": _h(0.9), "brm": _h(1.0),
        "td": _h(0.4, 1e-1, 1e2), "gbrm": _h(1.0, 1e-2, 1e2),
        "tdc": _h(1.0, 1e-2, 1e2, 1e-2, 1e1), "gtd2": _h(0.7, 1e-1, 1e3, 1e-2, 1e1),
    },
    "big-off": {
        "lstd": _h(0.0), "lspe": _h(0.0), "fpkf": _h(0.9), "brm": _h(1.0),
        "td": _h(0.4, 1e-1, 1e1), "gbrm": _h(0.0, 1e-2, 1e1),
        "tdc": _h(0.7, 1e-2, 1e3, 1e-2, 1e1), "gtd2": _h(1.0, 1e-2, 1e1, 1e-1, 1e3),
    },
}

SETTINGS = {
    "small-on": dict(n_states=30, n_actions=4, branching=2, n_features=8, off_policy=False),
    "small-off": dict(n_states=30, n_actions=4, branching=2, n_features=8, off_policy=True),
    "big-on": dict(n_states=100, n_actions=10, branching=3, n_features=20, off_policy=False),
    "big-off": dict(n_states=100, n_actions=10, branching=3, n_features=20, off_policy=True),
}


def setting_spec(name: str, **overrides) -> ExperimentSpec:
    return ExperimentSpec(**{**SETTINGS[name], **overrides})


# ------------------------------------------------------------------ CSV output

def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".10g")


def hyper_cells(name: str, h: Hyper) -> list[str]:
    cells = [_fmt(h.lam), "", "", "", ""]
    if name in GRADIENT:
        cells[1:3] = [_fmt(h.a0), _fmt(h.ac)]
    if name in TWO_TIMESCALE:
        cells[3:5] = [_fmt(h.b0), _fmt(h.bc)]
    return cells


HYPER_COLUMNS = ["lambda", "alpha0", "alphac", "beta0", "betac"]


def _write(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def results_dir(root: str | Path, spec: ExperimentSpec) -> Path:
    out = Path(root) / spec.digest()
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_grid(out: Path, result: GridResult) -> None:
    best_rows = [[name, *hyper_cells(name, h), _fmt(err), int(div)] for name, (h, err, div) in result.best.items()]
    _write(out / "grid_best.csv", ["algorithm", *HYPER_COLUMNS, "err", "all_diverged"], best_rows)
    all_rows = [[name, *hyper_cells(name, h), _fmt(err), int(div)] for name, h, err, div in result.rows]
    _write(out / "grid_all.csv", ["algorithm", *HYPER_COLUMNS, "err", "diverged"], all_rows)
    sens = [[name, _fmt(lam), _fmt(err)] for name, lam, err in lambda_sensitivity(result)]
    _write(out / "lambda_sensitivity.csv", ["algorithm", "lambda", "err"], sens)


def read_hypers(path: str | Path) -> dict:
    """Meta-parameters from a grid_best.csv file."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {k: float(row[c]) for k, c in zip(("a0", "ac", "b0", "bc"), HYPER_COLUMNS[1:]) if row[c]}
            out[row["algorithm"]] = Hyper(float(row["lambda"]), **kw)
    return out


def write_bench(out: Path, spec: ExperimentSpec, result: BenchResult) -> None:
    algs = list(spec.algorithms)
    steps = np.arange(1, spec.bench_steps + 1)
    for fname, table in (("curves_mean.csv", result.mean), ("curves_std.csv", result.std)):
        cols = np.column_stack([table[a] for a in algs])
        rows = ([str(i), *(_fmt(x) for x in row)] for i, row in zip(steps, cols))
        _write(out / fname, ["step", *algs], rows)
    fin = [[a, result.counts[a], _fmt(result.final[a].mean() if result.counts[a] else np.nan)] for a in algs]
    _write(out / "final_errors.csv", ["algorithm", "instances", "mean_final_err"], fin)
    _write(out / "failures.csv", ["instance", "algorithm", "reason"], result.failures)


def write_config(out: Path, payload: dict, name: str = "config.json") -> None:
    """Log the resolved configuration (seeds included) next to the outputs."""
    (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def with_overrides(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})
