import itertools
import math

import numpy as np
import pytest

from treerwre import brw as B
from treerwre import quenched as Q
from treerwre.env import EnvSpec, VertexAddress, make_constant_env, make_critical_two_point
from treerwre.errors import BudgetExceeded, GridUnderflow, InvalidSpec, NotNormalized


def _brute_barrier(spec, seed, n):
    env = Q.truncate(spec, seed, n)
    _, vbar = Q._leaf_tables(env)
    return float(vbar.min())


def test_potential_constant(half2):
    p = B.potential_along(half2, 0, (0, 1, 1, 0, 1))
    assert np.allclose(p.v_values, [k * math.log(2) for k in range(1, 6)])
    assert math.isclose(p.barrier, 5 * math.log(2))
    p1 = B.potential_along(make_constant_env(2, 1.0), 0, (1, 1))
    assert p1.v_values == (0.0, 0.0)


def test_potential_hand_path():
    p = B.PotentialPath.from_A((0, 0), [2.0, 0.5])
    assert np.allclose(p.v_values, [-math.log(2), 0.0])
    assert p.barrier == pytest.approx(0.0, abs=1e-15)


def test_potential_matches_truncation(crit2):
    env = Q.truncate(crit2, 5, 6)
    leaf = VertexAddress((1, 0, 0, 1, 1, 0))
    p = B.potential_along(crit2, 5, leaf)
    assert np.allclose(p.v_values, -np.cumsum(np.log(env.path_A(leaf))))


def test_barrier_constant(half2):
    assert math.isclose(B.barrier_min(half2, 0, 7).value, 7 * math.log(2), rel_tol=1e-14)


def test_barrier_depth_one(crit2):
    a = Q.truncate(crit2, 3, 1).root_A()
    assert math.isclose(B.barrier_min(crit2, 3, 1).value, float(np.min(-np.log(a))), rel_tol=1e-14)


@pytest.mark.parametrize("seed", range(50))
def test_barrier_matches_enumeration(crit2, seed):
    for n in (4, 9, 12):
        res = B.barrier_min(crit2, seed, n)
        assert abs(res.value - _brute_barrier(crit2, seed, n)) < 1e-12
        assert abs(B.potential_along(crit2, seed, res.witness).barrier - res.value) < 1e-12


def test_barrier_nondecreasing(crit2):
    vals = [B.barrier_min(crit2, 2, n).value for n in range(1, 30)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_barrier_budget(crit2):
    with pytest.raises(BudgetExceeded):
        B.barrier_min(crit2, 0, 200, prune_budget=1000)


def test_min_leaf_potential(crit2, half2):
    assert math.isclose(B.min_leaf_potential(half2, 0, 9), 9 * math.log(2), rel_tol=1e-14)
    assert B.min_leaf_potential(make_constant_env(2, 1.0), 0, 6) == 0.0
    for seed in range(5):
        env = Q.truncate(crit2, seed, 10)
        v = -np.log(env.level(1))
        for k in range(2, 11):
            v = env.expand(v, k) - np.log(env.level(k))
        assert abs(B.min_leaf_potential(crit2, seed, 10) - v.min()) < 1e-12
        assert B.min_leaf_potential(crit2, seed, 10) <= B.barrier_min(crit2, seed, 10).value + 1e-12


def test_min_leaf_potential_log_bounded(crit2):
    ratios = [B.min_leaf_potential(crit2, s, n) / math.log(n) for s in range(20) for n in (8, 16, 24)]
    assert max(ratios) < 5 and min(ratios) > -5


def test_count_Em(half2, crit2):
    assert B.count_Em(half2, 0, 2, 2.0) == 4
    assert B.count_Em(half2, 0, 2, 0.5) == 0
    assert B.count_Em(crit2, 1, 8, 1e6) == 256


def test_additive_martingale_examples(half2):
    for n in (1, 5, 12):
        assert math.isclose(B.additive_martingale(half2, 0, n), 1.0, rel_tol=1e-12)
    assert math.isclose(B.additive_martingale(make_constant_env(2, 1.0), 0, 3), 8.0)


def test_additive_martingale_matches_sum(crit2):
    env = Q.truncate(crit2, 8, 7)
    b = env.level(1)
    for k in range(2, 8):
        b = env.expand(b, k) * env.level(k)
    assert math.isclose(B.additive_martingale(crit2, 8, 7), b.sum(), rel_tol=1e-12)
    many = B.additive_martingale_many(crit2, [8, 9], 7)
    assert math.isclose(many[0], b.sum(), rel_tol=1e-12)


def test_additive_martingale_budget(crit2):
    with pytest.raises(BudgetExceeded):
        B.additive_martingale(crit2, 0, 30)


def test_one_step_check(crit2, half2):
    for seed in range(10):
        m, c = B.one_step_martingale_check(crit2, seed, 6)
        assert abs(m - c) < 1e-12
    assert B.one_step_martingale_check(half2, 0, 4) == pytest.approx((1.0, 1.0))
    m, c = B.one_step_martingale_check(make_constant_env(2, 1.0), 0, 2)
    assert c == 2 * m


def test_lower_tail_degenerate(half2):
    assert B.mn_lower_tail(half2, 8, 0.6, 50) == 0.0
    with pytest.raises(ValueError):
        B.mn_lower_tail(half2, 8, 0.5, 50)


def test_spine_law(crit2, half2):
    law = B.spine_step_distribution(crit2)
    s = 2 + math.sqrt(3)
    assert sorted(law.steps) == pytest.approx(sorted([math.log(s), -math.log(s)]))
    assert law.probs == pytest.approx((0.5, 0.5), abs=1e-12)
    assert abs(law.mean) < 1e-12
    half = B.spine_step_distribution(half2)
    assert half.steps == pytest.approx((-math.log(2),)) and half.probs == pytest.approx((1.0,))
    with pytest.raises(NotNormalized):
        B.spine_step_distribution(make_constant_env(2, 1.0))


@pytest.mark.parametrize("b", [2, 3, 4, 5])
def test_spine_variance(b):
    spec = make_critical_two_point(b)
    law = B.spine_step_distribution(spec)
    v, p = spec.marginal
    assert abs(law.variance - b * float(np.sum(p * v * np.log(v) ** 2))) < 1e-12
    assert abs(law.total - 1) < 1e-12 and abs(law.mean) < 1e-12


def test_many_to_one_constant_short_circuit(crit2):
    lhs, rhs = B.many_to_one_check(crit2, 9, "one", 0)
    assert lhs == (1.0, 0.0) or abs(lhs.value - 1) < 1e-12
    assert abs(rhs.value - 1) < 1e-12 and lhs.stderr == rhs.stderr == 0


def test_many_to_one_functionals(crit2):
    lhs, rhs = B.many_to_one_check(crit2, 4, "end_le0", 20000, seed=3)
    assert abs(lhs.value - rhs.value) < 3 * math.hypot(lhs.stderr, rhs.stderr)
    k = 10 * math.log(2 + math.sqrt(3))
    lhs, rhs = B.many_to_one_check(crit2, 6, "absmax_le", 20000, level=k, seed=4)
    assert abs(lhs.value - rhs.value) < 3 * math.hypot(lhs.stderr, rhs.stderr) + 1e-12
    assert rhs.value == pytest.approx(1.0)


def test_many_to_one_unknown(crit2):
    with pytest.raises(ValueError):
        B.many_to_one_check(crit2, 4, "nope", 10)


@pytest.fixture(scope="module")
def phi(crit2):
    return B.solve_phi_star(crit2)


def test_phi_basic(phi):
    assert phi.phi_values[0] == 1.0 and phi.t_grid[0] == 0.0
    assert np.all(np.diff(phi.phi_values) < 0)
    assert np.all((phi.phi_values > 0) & (phi.phi_values <= 1))
    assert phi.residual < 1e-6


def test_phi_small_t_band(phi):
    t = np.logspace(-4, -2, 30)
    r = phi.neg_log(t) / (t * np.log(1 / t))
    assert r.min() >= 0.5 and r.max() <= 2


def test_phi_is_fixed_point_off_grid(phi, crit2):
    t = np.array([0.013, 0.37, 2.9, 41.0])
    rhs = sum(p * np.prod([phi(t * a) for a in row], axis=0) for row, p in zip(crit2.atom_values, crit2.probs))
    assert np.max(np.abs(phi(t) - rhs)) < 1e-5


def test_phi_grid_doubling(phi, crit2):
    phi2 = B.solve_phi_star(crit2, grid_size=2048)
    t = np.logspace(-3, 3, 200)
    assert np.max(np.abs(phi2(t) - phi(t))) < 10 * 1e-5


def test_phi_csv_roundtrip(phi):
    back = B.PhiTable.from_csv(phi.to_csv())
    t = np.logspace(-5, 4, 50)
    assert np.allclose(back(t), phi(t), rtol=1e-12, atol=0)
    assert back.spec_hash == phi.spec_hash


def test_phi_rejects_noncritical(half2):
    with pytest.raises(InvalidSpec):
        B.solve_phi_star(make_constant_env(2, 0.3))


def test_multiplicative_martingale(phi, crit2):
    vals = [B.multiplicative_martingale(crit2, s, 6, phi) for s in range(200)]
    assert all(0 < v <= 1 for v in vals)
    one = B.multiplicative_martingale(crit2, 0, 1, phi)
    a = Q.truncate(crit2, 0, 1).root_A()
    assert math.isclose(one, float(np.prod(phi(a))), rel_tol=1e-12)


def test_multiplicative_martingale_grid_limit(crit2):
    small = B.solve_phi_star(crit2, t_max=1.5, grid_size=256)
    assert small.t_max < 4
    with pytest.raises(GridUnderflow):
        for s in range(1000):
            B.multiplicative_martingale(crit2, s, 2, small)
    assert 0 < B.multiplicative_martingale(crit2, s, 2, small, extrapolate=True) <= 1


def test_multiplicative_martingale_converges_along_n(phi, crit2):
    # increments shrink with depth; at n = 12..14 they are still of order 1e-2
    d_lo = [abs(B.multiplicative_martingale(crit2, s, 4, phi) - B.multiplicative_martingale(crit2, s, 2, phi))
            for s in range(40)]
    d_hi = [abs(B.multiplicative_martingale(crit2, s, 14, phi) - B.multiplicative_martingale(crit2, s, 12, phi))
            for s in range(40)]
    assert np.median(d_hi) < np.median(d_lo)
    assert np.median(d_hi) < 0.05
