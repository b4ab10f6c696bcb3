import math

import numpy as np
import pytest

from treerwre import quenched as Q
from treerwre import walker as W
from treerwre.env import VertexAddress, make_constant_env
from treerwre.errors import BudgetExceeded, EmptySample


def test_depth_one_excursion(crit2):
    for s in range(20):
        assert W.run_excursion(crit2, 0, s, 1) == (True, 1)


def test_excursion_deterministic(crit2):
    assert W.run_excursion(crit2, 3, 9, 6) == W.run_excursion(crit2, 3, 9, 6)


def test_excursion_budget(crit2):
    with pytest.raises(BudgetExceeded):
        for s in range(200):
            W.run_excursion(crit2, 0, s, 12, step_budget=3)


def test_constant_env_rho_mc(half2):
    est = W.estimate_rho_mc(half2, 0, 10, 100_000, seed_walk=1)
    assert abs(est.value - 0.1) < 3 * est.stderr
    est = W.estimate_rho_mc(half2, 0, 20, 1_000_000, seed_walk=2)
    assert abs(est.value - 0.05) < 3 * est.stderr
    assert est.trials == 1_000_000 and est.truncated == 0


def test_rho_mc_matches_exact(crit2):
    pairs = [(s, n) for s in range(10) for n in (6, 12)]
    for s, n in pairs:
        exact = Q.rho(Q.truncate(crit2, s, n))
        est = W.estimate_rho_mc(crit2, s, n, 40_000, seed_walk=100 + s)
        assert abs(est.value - exact) < 3 * est.stderr


def test_rho_mc_thread_invariance(crit2):
    a = W.estimate_rho_mc(crit2, 1, 8, 50_000, seed_walk=5, threads=1)
    b = W.estimate_rho_mc(crit2, 1, 8, 50_000, seed_walk=5, threads=3)
    assert a == b


def test_rho_mc_empty(crit2):
    with pytest.raises(EmptySample):
        W.estimate_rho_mc(crit2, 0, 4, 0)


def test_rho_mc_truncation_limit(crit2):
    with pytest.raises(BudgetExceeded):
        W.estimate_rho_mc(crit2, 0, 10, 2000, step_budget=2)


def test_first_passage_depth_one(crit2):
    rec = W.first_passage(crit2, (0, 0), 1)
    assert rec.tau_n == 1 and rec.returns_to_root == 0 and rec.reached


def test_first_passage_mean_constant_env(half2):
    recs = W.first_passage_many(half2, 0, 7, 8, 1000)
    tau = np.array([r.tau_n for r in recs], float)
    assert abs(tau.mean() - 64) < 3 * tau.std(ddof=1) / math.sqrt(len(tau))


def test_first_passage_mean_matches_formula(crit2):
    env_seed, n = 2, 6
    recs = W.first_passage_many(crit2, env_seed, 3, n, 4000)
    tau = np.array([r.tau_n for r in recs], float)
    exact = Q.expected_tau(Q.truncate(crit2, env_seed, n))
    assert abs(tau.mean() - exact) < 3 * tau.std(ddof=1) / math.sqrt(len(tau))


def test_first_passage_budget_flagged(crit2):
    rec = W.first_passage(crit2, (0, 0), 40, step_budget=5000)
    assert rec.tau_n is None and rec.steps == 5000


def test_excursion_count_tail(crit2):
    n = 6
    r = Q.rho(Q.truncate(crit2, 0, n))
    L = np.array([rec.returns_to_root for rec in W.first_passage_many(crit2, 0, 11, n, 5000)])
    for j in (1, 5, 20):
        p = (1 - r) ** j
        assert abs(np.mean(L >= j) - p) < 3 * math.sqrt(p * (1 - p) / L.size) + 1e-3


def test_xstar_record(crit2):
    rec = W.track_xstar(crit2, (0, 1), 200_000)
    xs = [x for _, x in rec.xstar_checkpoints]
    assert xs == sorted(xs) and rec.steps == 200_000
    lo, hi = W.xstar_ratio_band(rec)
    assert 0 < lo <= hi


def test_xstar_ballistic_contrast():
    rec = W.track_xstar(make_constant_env(2, 1.0), (0, 0), 100_000)
    for t, x in rec.xstar_checkpoints:
        assert x / t > 0.2


def test_xstar_short_rejected(crit2):
    with pytest.raises(ValueError):
        W.track_xstar(crit2, (0, 0), 100)


def test_walk_record_validation():
    with pytest.raises(ValueError):
        W.WalkRecord(0, 0, None, 0, [(1, 5), (2, 3)])
    with pytest.raises(ValueError):
        W.WalkRecord(0, 0, None, -1)


def test_restricted_chain_examples(crit2):
    ch = W.restricted_chain(Q.constant_env(2, 5, 0.5), (0,) * 5)
    assert np.allclose(ch.up_probs, 1 / 3)
    ch = W.restricted_chain(Q.constant_env(2, 5, 1.0), (0,) * 5)
    assert np.allclose(ch.up_probs, 1 / 2)


def test_ruin_reproduces_exit_formula(crit2):
    for s in range(20):
        env = Q.truncate(crit2, s, 7)
        leaf = VertexAddress.from_index(s * 5 % 128, 7, 2)
        ch = W.restricted_chain(env, leaf)
        w1 = env.path_A(leaf)[0] / env.root_A().sum()
        assert abs(ch.ruin_from_one() - Q.path_hit_prob(env, leaf) / w1) < 1e-12


def test_detailed_balance(crit2):
    for s in range(20):
        env = Q.truncate(crit2, s, 8)
        ch = W.restricted_chain(env, VertexAddress.from_index(s, 8, 2))
        assert ch.detailed_balance_defect() < 1e-12


def test_passage_bound_examples(crit2):
    env = Q.constant_env(2, 5, 0.5)
    leaf = (0,) * 5
    ch = W.restricted_chain(env, leaf)
    lhs, rhs = W.path_passage_bound_check(ch, env, leaf, 3)
    assert lhs == 0 and rhs > 0
    lhs, rhs = W.path_passage_bound_check(ch, env, leaf, 25)
    assert 0 < lhs < rhs
    for s in range(10):
        env = Q.truncate(crit2, s, 8)
        leaf = VertexAddress.from_index(s, 8, 2)
        ch = W.restricted_chain(env, leaf)
        for m in (8, 64, 512):
            lhs, rhs = W.path_passage_bound_check(ch, env, leaf, m)
            assert lhs <= rhs


def test_passage_cdf_monotone(crit2):
    env = Q.truncate(crit2, 3, 6)
    cdf = W.passage_cdf(W.restricted_chain(env, (1,) * 6), 300)
    assert np.all(np.diff(cdf) >= 0) and cdf[-1] <= 1
