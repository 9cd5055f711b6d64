import numpy as np
import pytest

from offtrace.garnet import GarnetSpec, generate_garnet, random_policy, uniform_policy
from offtrace.mdp import Mdp, Policy
from offtrace.sampling import sample_trajectory


def mixed_target(n_states, n_actions, seed, mismatch):
    """(1 - m) * uniform + m * random policy, so rho_max <= 1 + m * (n_actions - 1)."""
    beh = uniform_policy(n_states, n_actions)
    rnd = random_policy(n_states, n_actions, seed)
    return Policy((1 - mismatch) * beh.probs + mismatch * rnd.probs), beh


def garnet_case(n_states=20, n_actions=3, branching=2, p=8, seed=0, off_policy=True, mismatch=1.0):
    mdp, feats = generate_garnet(GarnetSpec(n_states, n_actions, branching, p, seed))
    if off_policy:
        target, behavior = mixed_target(n_states, n_actions, seed, mismatch)
    else:
        target = behavior = random_policy(n_states, n_actions, seed)
    return mdp, feats, target, behavior


def trajectory(n, seed=0, **kw):
    mdp, feats, target, behavior = garnet_case(seed=seed, **kw)
    return sample_trajectory(mdp, behavior, target, feats, n, seed=seed + 100)


def rel(x, ref):
    return np.linalg.norm(np.asarray(x) - np.asarray(ref)) / np.linalg.norm(ref)


def random_mdp(n_states, n_actions, seed, gamma=0.9):
    rng = np.random.default_rng(seed)
    P = rng.random((n_states, n_actions, n_states))
    P /= P.sum(-1, keepdims=True)
    return Mdp(P, rng.random((n_states, n_actions)), gamma)


def random_stochastic_policy(n_states, n_actions, seed):
    rng = np.random.default_rng(seed)
    pi = rng.random((n_states, n_actions)) + 0.05
    return Policy(pi / pi.sum(1, keepdims=True))


@pytest.fixture
def small_traj():
    return trajectory(300, seed=1, mismatch=0.3)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
