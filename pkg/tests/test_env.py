import math

import numpy as np
import pytest

from treerwre import env as E
from treerwre.errors import InvalidSpec


def test_two_point_constructor_has_four_atoms():
    spec = E.make_two_point_env(2, 3.0, 0.25, 0.5)
    assert len(spec.probs) == 4
    assert spec.a_min == 0.25 and spec.a_max == 3.0
    assert math.isclose(sum(spec.probs), 1.0, abs_tol=1e-12)


@pytest.mark.parametrize("args", [(1, 2.0, 0.5, 0.5), (2, 2.0, 0.5, 0.0), (2, 2.0, 0.5, 1.0), (2, -1.0, 0.5, 0.5)])
def test_two_point_rejects_bad_arguments(args):
    with pytest.raises(InvalidSpec):
        E.make_two_point_env(*args)


def test_critical_b2_closed_form(crit2):
    s = 2 + math.sqrt(3)
    assert math.isclose(crit2.a_max, s, rel_tol=1e-15)
    assert math.isclose(crit2.a_min, 1 / s, rel_tol=1e-15)
    assert math.isclose(crit2.a_max, 3.7320508, abs_tol=1e-7)
    assert math.isclose(crit2.a_min, 0.2679492, abs_tol=1e-7)
    _, p = crit2.marginal
    assert math.isclose(p[-1], 0.0669873, abs_tol=1e-7)
    assert abs(crit2.mean_A() - 0.5) < 1e-12


def test_critical_matches_generic_family():
    s = 2 + math.sqrt(3)
    a = E.make_two_point_env(2, s, 1 / s, (2 - math.sqrt(3)) / 4)
    b = E.make_critical_two_point(2)
    assert np.allclose(a.atom_values, b.atom_values) and np.allclose(a.probs, b.probs)


@pytest.mark.parametrize("b", range(2, 9))
def test_critical_family_is_critical_and_slow(b):
    spec = E.make_critical_two_point(b)
    assert abs(spec.mean_A() - 1 / b) < 1e-12
    assert abs(E.mean_A_log_A(spec)) < 1e-12
    assert E.classify_regime(spec).tag is E.RegimeTag.NULL_RECURRENT_SLOW


def test_critical_b3_s():
    spec = E.make_critical_two_point(3)
    assert math.isclose(spec.a_max, 3 + 2 * math.sqrt(2), rel_tol=1e-14)


def test_critical_rejects_b1():
    with pytest.raises(InvalidSpec):
        E.make_critical_two_point(1)


def test_psi_examples(crit2):
    spec = E.make_two_point_env(2, 2.0, 0.5, 0.5)
    assert math.isclose(E.psi(spec, 1.0), math.log(1.25), abs_tol=1e-12)
    assert E.psi(spec, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert math.isclose(E.psi(crit2, 1.0), math.log(0.5), abs_tol=1e-12)


def test_psi_convex_on_grid(crit2):
    ts = np.linspace(0, 3, 13)
    for t1 in ts:
        for t2 in ts:
            for lam in (0.25, 0.5, 0.75):
                lhs = E.psi(crit2, lam * t1 + (1 - lam) * t2)
                assert lhs <= lam * E.psi(crit2, t1) + (1 - lam) * E.psi(crit2, t2) + 1e-12


def test_compute_p_examples(crit2, half2):
    assert math.isclose(E.compute_p(crit2), 0.5, abs_tol=1e-10)
    assert math.isclose(E.compute_p(E.make_two_point_env(2, 3.0, 1 / 3, 0.5)), 1.0, abs_tol=1e-12)
    assert math.isclose(E.compute_p(half2), 0.5, abs_tol=1e-12)
    assert E.compute_p(crit2) <= min(1.0, crit2.mean_A()) + 1e-15


def test_theta_examples(crit2):
    spec = E.make_two_point_env(2, 8.0, 1 / 8, (2 - math.sqrt(3)) / 4)
    expected = math.log(2 + math.sqrt(3)) / (3 * math.log(2))
    assert math.isclose(E.theta(spec), expected, abs_tol=1e-9)
    assert math.isclose(E.theta(spec), 0.63332, abs_tol=1e-5)
    assert E.theta(crit2) == 1.0
    assert E.theta(E.make_two_point_env(2, 3.0, 1 / 3, 0.5)) is None


def test_kappa_examples(crit2):
    spec = E.make_two_point_env(2, 4.0, 6 / 19, 0.05)
    k = E.kappa(spec)
    assert 1.15 < k < 1.2
    assert abs(0.05 * 4 ** k + 0.95 * (6 / 19) ** k - 0.5) < 1e-9
    assert E.kappa(crit2) is None


def test_kappa_infinite_when_a_max_below_one():
    # E A = 1/2 with A <= 1, psi'(1) < 0
    spec = E.make_two_point_env(2, 0.9, 0.1, 0.5)
    assert abs(spec.mean_A() - 0.5) < 1e-12
    assert E.kappa(spec) == math.inf


def test_classify_examples():
    assert E.classify_regime(E.make_constant_env(2, 1.0)).tag is E.RegimeTag.TRANSIENT
    reg = E.classify_regime(E.make_two_point_env(2, 4.0, 6 / 19, 0.05))
    assert reg.tag is E.RegimeTag.NULL_RECURRENT_SUBDIFFUSIVE
    assert 1.15 < reg.kappa < 1.2
    assert E.classify_regime(E.make_constant_env(2, 0.3)).tag is E.RegimeTag.POSITIVE_RECURRENT
    assert E.classify_regime(E.make_critical_two_point(2)).theta == 1.0


def test_omega_examples(crit2):
    w = E.omega_from_A([0.5, 0.5])
    assert w.parent == 0.5 and np.allclose(w.children, [0.25, 0.25])
    w = E.omega_from_A([1.0, 1.0], is_root=True)
    assert w.parent is None and np.allclose(w.children, [0.5, 0.5])
    a = np.array([crit2.a_max, crit2.a_min])
    w = E.omega_from_A(a, spec=crit2)
    assert abs(w.parent + w.children.sum() - 1) < 1e-12
    assert np.array_equal(w.children / w.parent, a * (1.0 / (1 + a.sum())) / (1.0 / (1 + a.sum())))
    assert np.allclose(w.children / w.parent, a, rtol=1e-15)
    assert min(w.parent, w.children.min()) >= crit2.eps0


def test_omega_rejects_out_of_support(crit2):
    with pytest.raises(InvalidSpec):
        E.omega_from_A([10.0, 0.5], spec=crit2)


def test_realize_deterministic(crit2):
    a = E.realize_A(crit2, 7, (0, 1, 1))
    b = E.realize_A(crit2, 7, (0, 1, 1))
    assert np.array_equal(a, b)


def test_realize_frequencies(crit2):
    levels = E.realize_levels(crit2, 3, 20)
    vals = levels[-1].reshape(-1, 2)
    n = vals.shape[0]
    assert n >= 10**6 / 2
    for atom, p in zip(crit2.atom_values, crit2.probs):
        count = np.all(vals == atom, axis=1).sum()
        assert abs(count - n * p) < 4 * math.sqrt(n * p * (1 - p))


def test_realize_levels_match_lazy(crit2):
    levels = E.realize_levels(crit2, 11, 4)
    for k in range(4):
        for j in range(2 ** k):
            addr = E.VertexAddress.from_index(j, k, 2)
            assert np.array_equal(E.realize_A(crit2, 11, addr), levels[k][2 * j: 2 * j + 2])


def test_degenerate_law_flag(half2):
    assert half2.degenerate
    assert np.array_equal(E.realize_A(half2, 5, (1, 0)), [0.5, 0.5])


def test_marginal_mismatch_rejected():
    with pytest.raises(InvalidSpec):
        E.EnvSpec(2, ((1.0, 2.0),), (1.0,))


def test_text_roundtrip(crit2):
    back = E.EnvSpec.from_text(crit2.to_text())
    assert back == crit2 and back.spec_hash == crit2.spec_hash


def test_family_shorthand():
    spec = E.EnvSpec.from_text("b: 2\nfamily: {name: two_point, a_hi: 3.0, a_lo: 0.25, q: 0.5}\n")
    assert spec == E.make_two_point_env(2, 3.0, 0.25, 0.5)


def test_address_roundtrip():
    a = E.VertexAddress((1, 0, 1))
    assert a.index(2) == 5 and E.VertexAddress.from_index(5, 3, 2) == a
    assert a.parent() == E.VertexAddress((1, 0)) and a.depth == 3
    with pytest.raises(ValueError):
        E.VertexAddress(()).parent()
