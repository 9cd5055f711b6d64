"""Oracle suite: every learner against an independent reference, with JSON verdicts."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import oracles
from .exceptions import ChainError
from .garnet import GarnetSpec, generate_garnet, random_policy, uniform_policy
from .learners import Hyper, make_learner
from .mdp import Policy, induce_chain
from .sampling import sample_trajectory

PASS, FAIL, SKIP = "pass", "fail", "hypothesis unmet"


@dataclass(frozen=True)
class OracleConfig:
    n_states: int = 5
    n_actions: int = 2
    branching: int = 2
    n_features: int = 3
    gamma: float = 0.95
    lam: float = 0.5
    mismatch: float = 0.5  # target = (1 - m) * uniform + m * random policy
    batch_steps: int = 400
    mc_steps: int = 200_000
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "OracleConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown oracle-check fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _rel(x, ref) -> float:
    x, ref = np.asarray(x, float), np.asarray(ref, float)
    return float(np.linalg.norm(x - ref) / max(np.linalg.norm(ref), 1e-300))


def _verdict(name, value, tol, detail=""):
    ok = bool(np.isfinite(value) and value <= tol)
    return {"property": name, "status": PASS if ok else FAIL, "value": value, "tolerance": tol, "detail": detail}


def _skip(name, why):
    return {"property": name, "status": SKIP, "value": None, "tolerance": None, "detail": why}


def build_instance(cfg: OracleConfig):
    garnet = GarnetSpec(cfg.n_states, cfg.n_actions, cfg.branching, cfg.n_features, cfg.seed)
    mdp, features = generate_garnet(garnet, cfg.gamma)
    behavior = uniform_policy(cfg.n_states, cfg.n_actions)
    rand = random_policy(cfg.n_states, cfg.n_actions, cfg.seed)
    target = Policy((1 - cfg.mismatch) * behavior.probs + cfg.mismatch * rand.probs)
    return mdp, features, target, behavior


def run_suite(cfg: OracleConfig = OracleConfig(), learner_factory=make_learner) -> list[dict]:
    """Run every property; ``learner_factory`` is injectable for negative controls."""
    mdp, features, target, behavior = build_instance(cfg)
    p = features.n_features
    lam = cfg.lam
    out = []

    short = sample_trajectory(mdp, behavior, target, features, cfg.batch_steps, seed=cfg.seed)

    for name, batch in (("lstd", oracles.batch_lstd), ("brm", oracles.batch_brm)):
        th = learner_factory(name, p, cfg.gamma, Hyper(lam)).run(short)[-1]
        out.append(_verdict(f"recursive_equals_batch/{name}", _rel(th, batch(short, lam)), 1e-7))

    lspe = learner_factory("lspe", p, cfg.gamma, Hyper(lam))
    ths = lspe.run(short)
    out.append(_verdict("recursive_equals_batch/lspe_n", _rel(lspe.N, oracles.batch_lspe_n(short)), 1e-7))
    out.append(_verdict("recursive_equals_batch/lspe", _rel(ths[-1], oracles.batch_lspe(short, lam, ths[-2])), 1e-7))

    fpkf = learner_factory("fpkf", p, cfg.gamma, Hyper(lam))
    ths = fpkf.run(short)
    prev = np.vstack([np.zeros(p), ths[:-1]])
    out.append(_verdict("recursive_equals_batch/fpkf", _rel(ths[-1], oracles.batch_fpkf(short, lam, prev)), 1e-7))

    h0 = Hyper(0.0, a0=0.05, ac=100.0)
    bwd = learner_factory("td", p, cfg.gamma, h0).run(short)
    fwd = oracles.forward_view_updates(short, "td", h0)
    out.append(_verdict("forward_equals_backward/td_lambda0", float(np.abs(bwd - fwd).max()), 1e-12))

    h1 = Hyper(1.0, a0=0.01, ac=100.0)
    td1 = learner_factory("td", p, cfg.gamma, h1).run(short)
    for name in ("tdc", "gbrm"):
        other = learner_factory(name, p, cfg.gamma, h1).run(short)
        out.append(_verdict(f"equivalence/{name}1_equals_td1", float(np.abs(other - td1).max()), 1e-12))

    omega = np.random.default_rng(cfg.seed).normal(size=p)
    dl = oracles.lambda_td_errors(short, omega, lam)
    d1 = oracles.td_errors(short, omega)
    rec = d1[:-1] + cfg.gamma * lam * short.rhos[:-1] * dl[1:]
    out.append(_verdict("forward_view/lambda_td_recursion", float(np.abs(rec - dl[:-1]).max()), 1e-10))
    V = features.phi @ omega
    j = len(short) // 3
    direct = oracles.empirical_operator(short, j, len(short) - 1, V, lam) - V[short.states[j]]
    out.append(_verdict("forward_view/empirical_operator", abs(direct - dl[j]), 1e-9))

    vt = np.random.default_rng(cfg.seed + 1).normal(size=cfg.n_states)
    closed = oracles.apply_t_lambda(mdp, target, vt, min(lam, 0.9))
    out.append(_verdict("t_lambda/series", _rel(closed, _t_lambda_series(mdp, target, vt, min(lam, 0.9))), 1e-10))

    try:
        mq = oracles.model_quantities(mdp, target, behavior, features, lam)
    except ChainError as exc:
        out.append(_skip("model/*", str(exc)))
        return out
    long = sample_trajectory(mdp, behavior, target, features, cfg.mc_steps, seed=cfg.seed + 1)
    n = len(long)
    A, b = oracles.lstd_statistics(long, lam)
    out.append(_verdict("model/lstd_statistics_A", _rel(A / n, mq.A), 0.05))
    out.append(_verdict("model/lstd_statistics_b", _rel(b / n, mq.b), 0.05))
    th = learner_factory("lstd", p, cfg.gamma, Hyper(lam)).run(long)[-1]
    out.append(_verdict("model/lstd_fixed_point", _rel(th, mq.theta_star), 0.05))

    if not mq.brm_hypothesis:
        why = f"max lambda*gamma*rho = {lam * cfg.gamma * mq.rho_max:.3f} >= 1"
        for k in ("A_tilde", "b_tilde", "brm_fixed_point"):
            out.append(_skip(f"model/{k}", why))
    else:
        At, bt = oracles.brm_statistics(long, lam)
        out.append(_verdict("model/A_tilde", _rel(At / n, mq.A_tilde), 0.05))
        out.append(_verdict("model/b_tilde", _rel(bt / n, mq.b_tilde), 0.05))
        th = learner_factory("brm", p, cfg.gamma, Hyper(lam)).run(long)[-1]
        out.append(_verdict("model/brm_fixed_point", _rel(th, mq.theta_brm), 0.05))

    ids = oracles.expectation_identities(long, omega, lam)
    for key, (f, bk) in ids.items():
        out.append(_verdict(f"expectation/{key}", _rel(bk, f), 0.02))
    out.append(_verdict("expectation/td_model", _rel(ids["td"][1], mq.b - mq.A @ omega), 0.05))
    return out


def _t_lambda_series(mdp, pi, V, lam, terms=400):
    """(1 - lam) sum_{k < terms} lam^k T^{k+1} V with T the Bellman operator of ``pi``."""
    chain = induce_chain(mdp, pi)
    acc = np.zeros_like(V, dtype=float)
    tv = np.asarray(V, dtype=float)
    for k in range(terms):
        tv = chain.r_pi + mdp.gamma * chain.p_pi @ tv
        acc += (1 - lam) * lam ** k * tv
    return acc


def all_passed(verdicts: list[dict]) -> bool:
    return all(v["status"] != FAIL for v in verdicts)
