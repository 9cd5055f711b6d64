"""Trajectories generated under a behavior policy, annotated with importance ratios."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from numba import njit

from . import seeding
from .garnet import FeatureMap
from .mdp import Mdp, Policy, importance_ratios, induce_chain, stationary_distribution


@dataclass(frozen=True, eq=False)
class Transition:
    s: int
    a: int
    r: float
    s_next: int
    rho: float
    phi: np.ndarray
    phi_next: np.ndarray
    gamma: float


def delta_phi(t: Transition) -> np.ndarray:
    return t.phi - t.gamma * t.rho * t.phi_next


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A single continuing trajectory of n transitions.

    ``states`` has n + 1 entries (the last one is s_{n+1}); ``phis[i]`` is the
    feature vector of ``states[i]``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    rhos: np.ndarray
    phis: np.ndarray
    gamma: float
    seed: int | None = None

    def __post_init__(self):
        for name in ("states", "actions", "rewards", "rhos", "phis"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.actions)
        if not (len(self.states) == n + 1 == len(self.phis) and len(self.rewards) == n == len(self.rhos)):
            raise ValueError("inconsistent trajectory array lengths")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def n_features(self) -> int:
        return self.phis.shape[1]

    def transition(self, i: int) -> Transition:
        return Transition(
            int(self.states[i]), int(self.actions[i]), float(self.rewards[i]),
            int(self.states[i + 1]), float(self.rhos[i]),
            self.phis[i], self.phis[i + 1], self.gamma,
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self.transition(i)

    def prefix(self, n: int) -> "Trajectory":
        return Trajectory(
            self.states[: n + 1], self.actions[:n], self.rewards[:n],
            self.rhos[:n], self.phis[: n + 1], self.gamma, self.seed,
        )

    def delta_phis(self) -> np.ndarray:
        """All Delta phi_i stacked as an (n, p) array."""
        return self.phis[:-1] - self.gamma * self.rhos[:, None] * self.phis[1:]


def _cumulative(probs):
    cum = np.cumsum(probs, axis=-1)
    return cum / cum[..., -1:]


@njit(cache=True)
def _walk(cum_p, cum_b, s0, u_action, u_state):
    n = u_action.shape[0]
    states = np.empty(n + 1, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    s = s0
    for i in range(n):
        states[i] = s
        a = np.searchsorted(cum_b[s], u_action[i], side="right")
        actions[i] = a
        s = np.searchsorted(cum_p[s, a], u_state[i], side="right")
    states[n] = s
    return states, actions


def sample_trajectory(
    mdp: Mdp,
    behavior: Policy,
    target: Policy,
    features: FeatureMap,
    n: int,
    seed: int,
    start: str | int = "stationary",
) -> Trajectory:
    """Sample n transitions following ``behavior``; rho is taken against ``target``.

    ``start`` is "stationary" (behavior chain's stationary law), "uniform",
    or an explicit state index.
    """
    rho_table = importance_ratios(target, behavior)
    rng = seeding.rng(seed, "trajectory")
    if start == "stationary":
        mu = stationary_distribution(induce_chain(mdp, behavior))
        s0 = int(np.searchsorted(_cumulative(mu), rng.random(), side="right"))
    elif start == "uniform":
        s0 = int(rng.integers(mdp.n_states))
    else:
        s0 = int(start)
        if not 0 <= s0 < mdp.n_states:
            raise ValueError(f"start state {s0} out of range")
    u_action = rng.random(n)
    u_state = rng.random(n)
    states, actions = _walk(
        _cumulative(mdp.transition), _cumulative(behavior.probs), s0, u_action, u_state
    )
    return Trajectory(
        states=states,
        actions=actions,
        rewards=mdp.reward[states[:-1], actions],
        rhos=rho_table[states[:-1], actions],
        phis=features.phi[states],
        gamma=mdp.gamma,
        seed=seed,
    )


# Binary dump layout (all little-endian):
#   header: magic b"OTRJ", u32 version, u64 n, u32 p, f64 gamma
#   n records: u32 s, u32 a, f64 r, u32 s_next, f64 rho, p x f64 phi, p x f64 phi_next
MAGIC = b"OTRJ"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIQId")


def _record_dtype(p):
    return np.dtype([
        ("s", "<u4"), ("a", "<u4"), ("r", "<f8"), ("s_next", "<u4"), ("rho", "<f8"),
        ("phi", "<f8", (p,)), ("phi_next", "<f8", (p,)),
    ])


def dump_trajectory(traj: Trajectory, path: str | Path) -> None:
    n, p = len(traj), traj.n_features
    if n == 0:
        raise ValueError("cannot dump an empty trajectory: records carry no start state")
    rec = np.zeros(n, dtype=_record_dtype(p))
    rec["s"] = traj.states[:-1]
    rec["a"] = traj.actions
    rec["r"] = traj.rewards
    rec["s_next"] = traj.states[1:]
    rec["rho"] = traj.rhos
    rec["phi"] = traj.phis[:-1]
    rec["phi_next"] = traj.phis[1:]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DUMP_VERSION, n, p, traj.gamma))
        fh.write(rec.tobytes())


def load_trajectory(path: str | Path) -> Trajectory:
    raw = Path(path).read_bytes()
    magic, version, n, p, gamma = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != DUMP_VERSION:
        raise ValueError(f"{path}: not a trajectory dump (magic={magic!r}, version={version})")
    rec = np.frombuffer(raw, dtype=_record_dtype(p), count=n, offset=_HEADER.size)
    if n == 0:
        raise ValueError(f"{path}: empty trajectory dump")
    if not np.array_equal(rec["s_next"][:-1], rec["s"][1:]):
        raise ValueError(f"{path}: records do not chain")
    states = np.append(rec["s"], rec["s_next"][-1:]).astype(np.int64)
    phis = np.vstack([rec["phi"], rec["phi_next"][-1:]])
    return Trajectory(
        states=states, actions=rec["a"].astype(np.int64), rewards=rec["r"].copy(),
        rhos=rec["rho"].copy(), phis=phis, gamma=gamma,
    )
