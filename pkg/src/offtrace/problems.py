"""Evaluation problems (MDP, features, target and behavior policies) and their JSON form."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .garnet import FeatureMap, GarnetSpec, generate_garnet, random_policy, uniform_policy
from .mdp import Mdp, Policy, exact_value

FORMAT = "offtrace-problem"
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Problem:
    mdp: Mdp
    features: FeatureMap
    target: Policy
    behavior: Policy
    provenance: dict = field(default_factory=dict)

    @property
    def off_policy(self) -> bool:
        return not np.array_equal(self.target.probs, self.behavior.probs)

    @property
    def v_true(self) -> np.ndarray:
        return exact_value(self.mdp, self.target)

    @property
    def n_features(self) -> int:
        return self.features.n_features


def garnet_problem(garnet: GarnetSpec, off_policy: bool, gamma: float = 0.95) -> Problem:
    """Garnet MDP with a random cut-point target policy.

    On-policy the trajectories follow the target itself; off-policy they
    follow the uniform policy.
    """
    mdp, features = generate_garnet(garnet, gamma)
    target = random_policy(garnet.n_states, garnet.n_actions, garnet.seed)
    behavior = uniform_policy(garnet.n_states, garnet.n_actions) if off_policy else target
    provenance = {
        "garnet": [garnet.n_states, garnet.n_actions, garnet.branching, garnet.n_features],
        "seed": garnet.seed,
        "off_policy": bool(off_policy),
        "gamma": gamma,
        "sub_seeds": {s: seeding.derive_seed(garnet.seed, s) for s in ("transitions", "rewards", "features", "policy")},
    }
    return Problem(mdp, features, target, behavior, provenance)


def instance_spec(garnet: GarnetSpec, master_seed: int, index: int) -> GarnetSpec:
    """The Garnet spec of benchmark instance ``index`` under ``master_seed``."""
    return GarnetSpec(
        garnet.n_states, garnet.n_actions, garnet.branching, garnet.n_features,
        seed=seeding.derive_seed(master_seed, "instance", index),
    )


def problem_to_dict(problem: Problem) -> dict:
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "gamma": problem.mdp.gamma,
        "transition": problem.mdp.transition.tolist(),
        "reward": problem.mdp.reward.tolist(),
        "features": problem.features.phi.tolist(),
        "target": problem.target.probs.tolist(),
        "behavior": problem.behavior.probs.tolist(),
        "provenance": problem.provenance,
    }


def problem_from_dict(data: dict) -> Problem:
    if data.get("format") != FORMAT:
        raise ValueError("not a serialized problem")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported problem format version {data.get('version')}")
    mdp = Mdp(np.asarray(data["transition"]), np.asarray(data["reward"]), float(data["gamma"]))
    return Problem(
        mdp,
        FeatureMap(np.asarray(data["features"])),
        Policy(np.asarray(data["target"])),
        Policy(np.asarray(data["behavior"])),
        dict(data.get("provenance", {})),
    )


def save_problem(problem: Problem, path: str | Path) -> None:
    # repr-exact floats, so a round trip is lossless
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=1))


def load_problem(path: str | Path) -> Problem:
    return problem_from_dict(json.loads(Path(path).read_text()))
