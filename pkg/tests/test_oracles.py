import numpy as np
import pytest

from offtrace import oracles
from offtrace.exceptions import HypothesisUnmet
from offtrace.garnet import FeatureMap
from offtrace.learners import Hyper, make_learner
from offtrace.mdp import exact_value, induce_chain, stationary_distribution
from offtrace.sampling import Trajectory, sample_trajectory

from conftest import garnet_case, random_mdp, random_stochastic_policy, rel, trajectory


# ------------------------------------------------------------------ batch oracles

def test_trace_weights_definition():
    traj = trajectory(12, seed=1, mismatch=0.5)
    lam, g = 0.7, traj.gamma
    W = oracles.trace_weights(traj, lam)
    for j in range(12):
        for k in range(12):
            ref = (g * lam) ** (k - j) * np.prod(traj.rhos[j:k]) if k >= j else 0.0
            assert W[j, k] == pytest.approx(ref, rel=1e-14, abs=0)


def test_sum_swap_lemma_on_random_f():
    rng = np.random.default_rng(0)
    for n in (1, 5, 20):
        f = rng.normal(size=(n, n))
        by_j = sum(f[j, k] for j in range(n) for k in range(j, n))
        by_k = sum(f[j, k] for k in range(n) for j in range(k + 1))
        assert by_j == pytest.approx(by_k, rel=1e-12)


def test_batch_systems_match_explicit_loops():
    traj = trajectory(15, seed=2, mismatch=0.5)
    lam, g = 0.6, traj.gamma
    n, p = len(traj), traj.n_features
    dphi = traj.delta_phis()
    rw = traj.rhos * traj.rewards

    def weight(j, k):
        return (g * lam) ** (k - j) * np.prod(traj.rhos[j:k])

    A, b = np.zeros((p, p)), np.zeros(p)
    for k in range(n):
        z = sum(weight(j, k) * traj.phis[j] for j in range(k + 1))
        A += np.outer(z, dphi[k])
        b += z * rw[k]
    A2, b2 = oracles.lstd_system(traj, lam)
    np.testing.assert_allclose(A2, A, rtol=1e-12)
    np.testing.assert_allclose(b2, b, rtol=1e-12)

    At, bt = np.zeros((p, p)), np.zeros(p)
    for j in range(n):
        psi = sum(weight(j, k) * dphi[k] for k in range(j, n))
        zz = sum(weight(j, k) * rw[k] for k in range(j, n))
        At += np.outer(psi, psi)
        bt += psi * zz
    At2, bt2 = oracles.brm_system(traj, lam)
    np.testing.assert_allclose(At2, At, rtol=1e-12)
    np.testing.assert_allclose(bt2, bt, rtol=1e-12)
    # the O(n p^2) trace accumulation (triple-sum rearrangement) agrees too
    At3, bt3 = oracles.brm_statistics(traj, lam)
    np.testing.assert_allclose(At3, At, rtol=1e-10)
    np.testing.assert_allclose(bt3, bt, rtol=1e-10)
    A3, b3 = oracles.lstd_statistics(traj, lam)
    np.testing.assert_allclose(A3, A, rtol=1e-12)
    np.testing.assert_allclose(b3, b, rtol=1e-12)


def test_lstd_lambda_zero_system(small_traj):
    A, _ = oracles.lstd_system(small_traj, 0.0)
    np.testing.assert_allclose(A, small_traj.phis[:-1].T @ small_traj.delta_phis(), rtol=1e-13)


def test_zero_reward_gives_zero(small_traj):
    t = Trajectory(small_traj.states, small_traj.actions, np.zeros(len(small_traj)),
                   small_traj.rhos, small_traj.phis, small_traj.gamma)
    np.testing.assert_array_equal(oracles.batch_lstd(t, 0.5), 0.0)
    np.testing.assert_array_equal(oracles.batch_brm(t, 0.5), 0.0)


def test_brm_lambda_zero_and_single_transition(small_traj):
    At, bt = oracles.brm_system(small_traj, 0.0)
    dphi = small_traj.delta_phis()
    np.testing.assert_allclose(At, dphi.T @ dphi, rtol=1e-13)
    np.testing.assert_allclose(bt, dphi.T @ (small_traj.rhos * small_traj.rewards), rtol=1e-13)
    one = small_traj.prefix(1)
    d = one.delta_phis()[0]
    th = oracles.batch_brm(one, 0.8)
    np.testing.assert_allclose((1e-3 * np.eye(8) + np.outer(d, d)) @ th, d * one.rhos[0] * one.rewards[0])


def test_batch_solutions_regularised_by_reg(small_traj):
    A, b = oracles.lstd_system(small_traj, 0.3)
    np.testing.assert_allclose(oracles.batch_lstd(small_traj, 0.3, reg=0.0), np.linalg.solve(A, b))


# ------------------------------------------------------------------ model quantities

def test_lambda_zero_on_policy_A():
    mdp, f, pi, _ = garnet_case(10, 2, 2, 3, seed=1, off_policy=False)
    mq = oracles.model_quantities(mdp, pi, pi, f, 0.0)
    chain = induce_chain(mdp, pi)
    D0 = np.diag(stationary_distribution(chain))
    Phi = f.phi
    np.testing.assert_allclose(mq.Q, np.eye(10))
    np.testing.assert_allclose(mq.A, Phi.T @ D0 @ (np.eye(10) - mdp.gamma * chain.p_pi) @ Phi, atol=1e-13)


def test_lambda_one_targets_projection_of_true_value():
    mdp, f, pi, beh = garnet_case(10, 2, 2, 3, seed=2, mismatch=0.5)
    mq = oracles.model_quantities(mdp, pi, beh, f, 1.0)
    v = exact_value(mdp, pi)
    D0 = np.diag(mq.mu0)
    np.testing.assert_allclose(mq.b, f.phi.T @ D0 @ v, rtol=1e-10)
    proj = np.linalg.solve(f.phi.T @ D0 @ f.phi, f.phi.T @ D0 @ v)
    np.testing.assert_allclose(mq.theta_star, proj, rtol=1e-8)


def test_model_invariants():
    mdp, f, pi, beh = garnet_case(8, 2, 2, 3, seed=3, mismatch=0.3)
    mq = oracles.model_quantities(mdp, pi, beh, f, 0.5)
    for M in (mq.D, mq.Dprime):
        np.testing.assert_array_equal(M, np.diag(np.diag(M)))
        assert (np.diag(M) >= 0).all()
    np.testing.assert_allclose(mq.Pi0 @ mq.Pi0, mq.Pi0, atol=1e-10)
    assert mq.T_lambda_spectral_radius >= 0
    # rows sum to sum_a pi^2 / pi0 >= 1 (Cauchy-Schwarz): not a stochastic matrix off-policy
    np.testing.assert_allclose(mq.P_tilde.sum(1), (pi.probs ** 2 / beh.probs).sum(1))
    assert (mq.P_tilde.sum(1) >= 1 - 1e-12).all()


def test_brm_limit_guard():
    mdp, f, pi, beh = garnet_case(6, 2, 2, 3, seed=4, mismatch=1.0)
    lam = 0.99
    mq = oracles.model_quantities(mdp, pi, beh, f, lam)
    assert lam * mdp.gamma * mq.rho_max >= 1
    assert not mq.brm_hypothesis and mq.A_tilde is None
    with pytest.raises(HypothesisUnmet):
        oracles.model_quantities(mdp, pi, beh, f, lam, require_brm=True)
    with pytest.raises(HypothesisUnmet):
        mq.theta_brm


def test_on_policy_b_tilde_forms_agree():
    mdp, f, pi, _ = garnet_case(8, 2, 2, 3, seed=5, off_policy=False)
    mq = oracles.model_quantities(mdp, pi, pi, f, 0.6)
    np.testing.assert_allclose(mq.b_tilde, mq.b_tilde_displayed, rtol=1e-10)


def test_lambda_zero_brm_limit_is_direct():
    # lambda = 0: A~ = E[dphi dphi'], b~ = E[dphi rho r], computed here state-action-next by brute force
    mdp, f, pi, beh = garnet_case(6, 2, 2, 3, seed=6, mismatch=0.4)
    mq = oracles.model_quantities(mdp, pi, beh, f, 0.0)
    g, Phi = mdp.gamma, f.phi
    rho = pi.probs / beh.probs
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for s in range(6):
        for a in range(2):
            for t in range(6):
                w = mq.mu0[s] * beh.probs[s, a] * mdp.transition[s, a, t]
                d = Phi[s] - g * rho[s, a] * Phi[t]
                A += w * np.outer(d, d)
                b += w * d * rho[s, a] * mdp.reward[s, a]
    np.testing.assert_allclose(mq.A_tilde, A, rtol=1e-10)
    np.testing.assert_allclose(mq.b_tilde, b, rtol=1e-10)


def test_empirical_brm_statistics_converge():
    mdp, f, pi, beh = garnet_case(5, 2, 2, 3, seed=7, mismatch=0.5)
    mq = oracles.model_quantities(mdp, pi, beh, f, 0.5, require_brm=True)
    traj = sample_trajectory(mdp, beh, pi, f, 300_000, seed=7)
    At, bt = oracles.brm_statistics(traj, 0.5)
    n = len(traj)
    assert rel(At / n, mq.A_tilde) < 0.05
    assert rel(bt / n, mq.b_tilde) < 0.05


# ------------------------------------------------------------------ operators and forward views

def test_t_lambda_cases():
    mdp = random_mdp(3, 2, 0, gamma=0.9)
    pi = random_stochastic_policy(3, 2, 0)
    chain = induce_chain(mdp, pi)
    V = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(oracles.apply_t_lambda(mdp, pi, V, 0.0), chain.r_pi + 0.9 * chain.p_pi @ V)
    vpi = exact_value(mdp, pi)
    np.testing.assert_allclose(oracles.apply_t_lambda(mdp, pi, vpi, 0.7), vpi, atol=1e-10)


@pytest.mark.parametrize("lam", [0.0, 0.5, 0.9])
def test_t_lambda_geometric_series(lam):
    mdp = random_mdp(3, 2, 1, gamma=0.9)
    pi = random_stochastic_policy(3, 2, 1)
    chain = induce_chain(mdp, pi)
    V = np.array([3.0, 0.0, -1.0])
    acc, tv = np.zeros(3), V.copy()
    for k in range(400):
        tv = chain.r_pi + 0.9 * chain.p_pi @ tv
        acc += (1 - lam) * lam ** k * tv
    np.testing.assert_allclose(oracles.apply_t_lambda(mdp, pi, V, lam), acc, rtol=1e-10)


def test_empirical_operator_single_term(small_traj):
    V = np.random.default_rng(0).normal(size=20)
    s, j = small_traj.states, 7
    one_step = small_traj.rhos[j] * (small_traj.rewards[j] + small_traj.gamma * V[s[j + 1]])
    for lam in (0.0, 0.6):
        assert oracles.empirical_operator(small_traj, j, j, V, lam) == pytest.approx(one_step)
    assert oracles.empirical_operator(small_traj, j, j + 40, V, 0.0) == pytest.approx(one_step)
    with pytest.raises(IndexError):
        oracles.empirical_operator(small_traj, 5, 4, V, 0.5)
    with pytest.raises(IndexError):
        oracles.empirical_operator(small_traj, 0, len(small_traj), V, 0.5)


def test_empirical_operator_matches_backward_recursion(small_traj):
    omega = np.random.default_rng(1).normal(size=8)
    V = small_traj.phis @ omega
    lam = 0.8
    dl = oracles.lambda_td_errors(small_traj, omega, lam)
    n = len(small_traj)
    Vs = np.zeros(20)
    Vs[small_traj.states] = V  # features are state functions, so V is well defined per state
    for j in (0, 17, n - 1):
        direct = oracles.empirical_operator(small_traj, j, n - 1, Vs, lam) - Vs[small_traj.states[j]]
        assert direct == pytest.approx(dl[j], rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("n", [1, 2, 50, 300])
def test_lambda_td_error_recursion_on_prefixes(small_traj, n):
    traj = small_traj.prefix(n)
    omega = np.arange(8.0) / 8
    lam = 0.5
    d = oracles.td_errors(traj, omega)
    dl = oracles.lambda_td_errors(traj, omega, lam)
    assert dl[-1] == d[-1]
    np.testing.assert_allclose(dl[:-1], d[:-1] + traj.gamma * lam * traj.rhos[:-1] * dl[1:], rtol=1e-13, atol=1e-14)
    c, E = oracles.lambda_return_system(traj, lam)
    np.testing.assert_allclose(c - E @ omega, dl, rtol=1e-10, atol=1e-12)


def test_lambda_gradient_recursion_and_boundary(small_traj):
    G = oracles.lambda_gradients(small_traj, 0.4)
    g, rho, phi = small_traj.gamma, small_traj.rhos, small_traj.phis
    np.testing.assert_allclose(G[-1], g * rho[-1] * 0.6 * phi[-1])
    np.testing.assert_allclose(G[:-1], (g * rho[:-1] * 0.6)[:, None] * phi[1:-1] + (g * 0.4 * rho[:-1])[:, None] * G[1:],
                               rtol=1e-13)
    np.testing.assert_array_equal(oracles.lambda_gradients(small_traj, 1.0), 0.0)


def test_forward_view_rejects_unknown_kind(small_traj):
    with pytest.raises(ValueError):
        oracles.forward_view_updates(small_traj, "lstd", Hyper(0.0))


def test_expectation_identities_short_run():
    mdp, f, pi, beh = garnet_case(6, 2, 2, 3, seed=8, mismatch=0.5)
    traj = sample_trajectory(mdp, beh, pi, f, 100_000, seed=8)
    omega = np.random.default_rng(8).normal(size=3)
    ids = oracles.expectation_identities(traj, omega, 0.5)
    for fwd, bwd in ids.values():
        assert rel(bwd, fwd) < 0.02
    mq = oracles.model_quantities(mdp, pi, beh, f, 0.5)
    assert rel(ids["td"][1], mq.b - mq.A @ omega) < 0.05
