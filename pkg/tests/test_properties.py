"""Property-based checks over random laws, seeds and depths."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from treerwre import _hash, brw, oracle, quenched, walker
from treerwre.env import (EnvSpec, VertexAddress, compute_p, make_two_point_env, omega_from_A, psi,
                          realize_A)
from treerwre.xlab import fit_exponent

seeds = st.integers(min_value=0, max_value=2**63 - 1)
positive = st.floats(min_value=0.05, max_value=20.0, allow_nan=False)


@st.composite
def two_point(draw, b=st.integers(2, 4)):
    bb = draw(b)
    lo = draw(st.floats(0.05, 2.0))
    hi = lo * draw(st.floats(1.01, 40.0))
    q = draw(st.floats(0.02, 0.98))
    return make_two_point_env(bb, hi, lo, q)


@given(seeds, st.lists(st.integers(0, 1), max_size=12))
def test_hash_numba_matches_numpy(seed, digits):
    key = np.uint64(_hash.root_key(np.uint64(seed)))
    for d in digits:
        key = np.uint64(_hash.child_key(key, d))
    assert key == _hash.address_key(seed, digits)
    assert _hash.draw_unit(key) == _hash.draw_unit_array(np.array([key], dtype=np.uint64))[0]


@given(seeds)
def test_unit_draws_in_range(seed):
    u = _hash.draw_unit_array(_hash.child_keys_array(_hash.root_key_array(seed), 64))
    assert np.all((u >= 0) & (u < 1))


@given(st.lists(positive, min_size=2, max_size=6), st.booleans())
def test_omega_properties(a, is_root):
    w = omega_from_A(a, is_root=is_root)
    total = w.children.sum() + (0.0 if w.parent is None else w.parent)
    assert abs(total - 1) < 1e-12
    if not is_root:
        assert np.allclose(w.children / w.parent, a, rtol=1e-13)


@given(two_point(), st.floats(0, 3), st.floats(0, 3), st.floats(0, 1))
def test_psi_convex(spec, t1, t2, lam):
    lhs = psi(spec, lam * t1 + (1 - lam) * t2)
    assert lhs <= lam * psi(spec, t1) + (1 - lam) * psi(spec, t2) + 1e-12


@given(two_point())
@settings(max_examples=30, deadline=None)
def test_p_bounds(spec):
    p = compute_p(spec)
    assert p <= 1 + 1e-12 and p <= spec.mean_A() + 1e-12


@given(two_point(st.just(2)), seeds, st.lists(st.integers(0, 1), max_size=8))
def test_realize_is_pure(spec, seed, digits):
    a = realize_A(spec, seed, digits)
    assert np.array_equal(a, realize_A(spec, seed, digits))
    assert np.all((a >= spec.a_min) & (a <= spec.a_max))


@given(two_point(st.just(2)), seeds, st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_recursions_match_oracle(spec, seed, n):
    env = quenched.truncate(spec, seed, n)
    assert abs(quenched.rho(env) - oracle.rho(env)) < 1e-10
    t = oracle.expected_tau(env)
    assert abs(quenched.expected_tau(env) - t) / t < 1e-8
    assert quenched.rho(env) >= quenched.prop24_bound(env)


@given(two_point(st.just(2)), seeds, st.integers(1, 10))
@settings(max_examples=40, deadline=None)
def test_rho_monotone_in_depth(spec, seed, n):
    a = quenched.rho(quenched.truncate(spec, seed, n))
    b = quenched.rho(quenched.truncate(spec, seed, n + 1))
    assert 0 < b <= a <= 1


@given(two_point(st.just(2)), seeds, st.integers(1, 10))
@settings(max_examples=40, deadline=None)
def test_barrier_properties(spec, seed, n):
    res = brw.barrier_min(spec, seed, n)
    env = quenched.truncate(spec, seed, n)
    _, vbar = quenched._leaf_tables(env)
    assert abs(res.value - vbar.min()) < 1e-12
    assert brw.min_leaf_potential(spec, seed, n) <= res.value + 1e-12
    assert brw.barrier_min(spec, seed, n + 1).value >= res.value - 1e-12


@given(two_point(st.just(2)), seeds, st.integers(2, 8))
@settings(max_examples=30, deadline=None)
def test_restricted_chain_reversible(spec, seed, n):
    env = quenched.truncate(spec, seed, n)
    leaf = VertexAddress.from_index(seed % (2 ** n), n, 2)
    ch = walker.restricted_chain(env, leaf)
    assert ch.detailed_balance_defect() < 1e-12
    assert np.all((ch.up_probs > spec.eps0) & (ch.up_probs < 1 - spec.eps0))


@given(two_point(st.just(2)), seeds, st.integers(1, 8))
@settings(max_examples=25, deadline=None)
def test_walk_is_pure(spec, seed, n):
    a = walker.first_passage(spec, (seed, seed ^ 1), n, step_budget=20000)
    b = walker.first_passage(spec, (seed, seed ^ 1), n, step_budget=20000)
    assert a == b
    if a.reached:
        assert a.tau_n >= n and (a.tau_n - n) % 2 == 0


@given(st.floats(0.05, 5), st.floats(0.1, 0.9), st.floats(0.01, 100))
def test_fit_exact_power_and_rescaling(c, e, scale):
    ns = [8, 16, 32, 64, 128]
    a = fit_exponent([(n, c * n ** e) for n in ns], "log_vs_log")
    b = fit_exponent([(n, scale * c * n ** e) for n in ns], "log_vs_log")
    assert abs(a.slope - e) < 1e-9 and abs(a.slope - b.slope) < 1e-12
