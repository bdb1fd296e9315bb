import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coordsim.prob import (AlphabetError, Channel, CoordinationSystem, JointPmf, Pmf, binary_entropy,
                           compose_joint, conditional_entropy, degradation_check, entropy,
                           kl_divergence, min_star, mutual_information, total_variation)
from coordsim.presets import make_system


def pair_joint(p_x, ch):
    return JointPmf(np.asarray(p_x)[:, None] * ch.rows, ("X", "Y"))


def test_entropy_examples():
    assert entropy(Pmf.uniform(2)) == pytest.approx(1.0)
    assert entropy(Pmf.point(3, 1)) == 0.0
    # direct formula
    assert entropy(Pmf.bernoulli(0.1)) == pytest.approx(-(0.1 * np.log2(0.1) + 0.9 * np.log2(0.9)), abs=1e-12)
    assert entropy(Pmf.bernoulli(0.1)) == pytest.approx(0.4690, abs=1e-4)


def test_pmf_validation():
    with pytest.raises(ValueError):
        Pmf([0.5, 0.6])
    with pytest.raises(ValueError):
        Pmf([1.2, -0.2])
    with pytest.raises(ValueError):
        Channel([[0.5, 0.4], [0.5, 0.5]])


def test_conditional_entropy_and_mi_examples():
    ind = JointPmf(np.full((2, 2), 0.25), ("X", "Y"))
    assert conditional_entropy(ind, ["X"], ["Y"]) == pytest.approx(1.0)
    assert mutual_information(ind, ["X"], ["Y"]) == pytest.approx(0.0, abs=1e-12)
    same = pair_joint([0.5, 0.5], Channel.identity())
    assert conditional_entropy(same, ["X"], ["Y"]) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(same, ["X"], ["Y"]) == pytest.approx(1.0)
    noisy = pair_joint([0.5, 0.5], Channel.bsc(0.11))
    h = -(0.11 * np.log2(0.11) + 0.89 * np.log2(0.89))
    assert conditional_entropy(noisy, ["X"], ["Y"]) == pytest.approx(h, abs=1e-12)
    assert conditional_entropy(noisy, ["X"], ["Y"]) == pytest.approx(0.49995, abs=1e-4)
    assert mutual_information(noisy, ["X"], ["Y"]) == pytest.approx(0.50005, abs=1e-4)


def test_unknown_and_overlapping_axes():
    j = JointPmf(np.full((2, 2), 0.25), ("X", "Y"))
    with pytest.raises(KeyError):
        conditional_entropy(j, ["Z"], ["Y"])
    with pytest.raises(ValueError):
        mutual_information(j, ["X"], ["X"])


def test_min_star_examples():
    assert min_star([0.5, 0.5]) == 0.5
    assert min_star([0.7, 0.3, 0.0]) == 0.3
    assert min_star([1.0]) == 1.0


def test_tv_and_kl_examples():
    assert total_variation([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert total_variation([1, 0], [0, 1]) == 1.0
    assert total_variation([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.4)
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(1.0)
    assert kl_divergence([1, 0], [0, 1]) == float("inf")
    with pytest.raises(AlphabetError):
        total_variation([1.0], [0.5, 0.5])


pmfs = st.integers(2, 6).flatmap(
    lambda k: st.tuples(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k),
                        st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k)))


def _norm(v):
    v = np.asarray(v) + 1e-3
    return v / v.sum()


@settings(max_examples=200, deadline=None)
@given(pmfs)
def test_tv_bounds_and_pinsker(pair):
    p, q = _norm(pair[0]), _norm(pair[1])
    tv = total_variation(p, q)
    assert 0.0 <= tv <= 1.0
    assert tv <= np.sqrt(kl_divergence(p, q) * np.log(2) / 2) + 1e-12
    assert total_variation(p, p) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8))
def test_entropy_bounded_by_log_alphabet(v):
    p = _norm(v)
    assert entropy(p) <= np.log2(p.size) + 1e-9
    assert entropy(np.full(p.size, 1 / p.size)) == pytest.approx(np.log2(p.size), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6))
def test_mi_symmetry(v):
    t = np.asarray(v).reshape(2, 3)
    j = JointPmf(t / t.sum(), ("X", "Y"))
    assert mutual_information(j, ["X"], ["Y"]) == pytest.approx(mutual_information(j, ["Y"], ["X"]), abs=1e-9)


def test_binary_entropy_vectorized():
    h = binary_entropy(np.array([0.0, 0.5, 1.0, 0.1]))
    assert h[:3].tolist() == [0.0, 1.0, 0.0]
    assert h[3] == pytest.approx(entropy([0.1, 0.9]))


def test_compose_copy_system():
    s = make_system("uniform", "copy", "copy(c)", "identity", "copy(b)")
    t = s.joint.table  # axes X Y A B C
    assert s.joint.axes == ("X", "Y", "A", "B", "C")
    assert t[0, 0, 0, 0, 0] == pytest.approx(0.5)
    assert t[1, 1, 1, 1, 1] == pytest.approx(0.5)
    assert t.sum() == pytest.approx(1.0)


def test_compose_point_masses():
    s = make_system("point(1)", "copy", "copy(c)", "identity", "copy(b)")
    assert np.count_nonzero(s.joint.table) == 1


def test_compose_reproduces_kernels(rng):
    for _ in range(10):
        p_ac = rng.dirichlet(np.ones(4)).reshape(2, 2)
        kx = Channel(rng.dirichlet(np.ones(3), size=4))
        kb = Channel(rng.dirichlet(np.ones(2), size=2))
        ky = Channel(rng.dirichlet(np.ones(2), size=4))
        s = CoordinationSystem(JointPmf(p_ac, ("A", "C")), kx, kb, ky)
        j = s.joint
        xac = j.marginal(("A", "C", "X")).table
        np.testing.assert_allclose(xac / xac.sum(axis=2, keepdims=True), kx.rows.reshape(2, 2, 3), atol=1e-9)
        ab = j.marginal(("A", "B")).table
        np.testing.assert_allclose(ab / ab.sum(axis=1, keepdims=True), kb.rows, atol=1e-9)
        bcy = j.marginal(("B", "C", "Y")).table
        np.testing.assert_allclose(bcy / bcy.sum(axis=2, keepdims=True), ky.rows.reshape(2, 2, 2), atol=1e-9)
        # Markov chain X - (A,C) - B: I(X;B|A,C) = 0
        h = conditional_entropy(j, ["X"], ["A", "C"]) - conditional_entropy(j, ["X"], ["A", "B", "C"])
        assert abs(h) < 1e-9


def test_compose_rejects_mismatch():
    p_ac = JointPmf(np.full((2, 2), 0.25), ("A", "C"))
    with pytest.raises(AlphabetError):
        CoordinationSystem(p_ac, Channel.identity(3), Channel.identity(), Channel.identity(4))
    good = CoordinationSystem(p_ac, Channel.identity(4), Channel.identity(), Channel.identity(4))
    with pytest.raises(ValueError):
        CoordinationSystem(p_ac, Channel.identity(4), Channel.identity(), Channel.identity(4),
                           q_xy=JointPmf(np.full((4, 4), 1 / 16), ("X", "Y")))
    CoordinationSystem(p_ac, Channel.identity(4), Channel.identity(), Channel.identity(4), q_xy=good.q_xy)


def test_degradation_examples():
    weak = Channel.bsc(0.2)
    ok, D = degradation_check(Channel.identity(), weak)
    assert ok and np.allclose(D.rows, weak.rows, atol=1e-7)
    ok, D = degradation_check(Channel.bsc(0.05), Channel.bsc(0.10))
    q = 0.05 / 0.90
    assert ok
    np.testing.assert_allclose(Channel.bsc(0.05).rows @ D.rows, Channel.bsc(0.10).rows, atol=1e-7)
    # BSC witness is unique for this pair
    np.testing.assert_allclose(D.rows, Channel.bsc(q).rows, atol=1e-6)
    ok, D = degradation_check(Channel.bsc(0.10), Channel.bsc(0.05))
    assert not ok and D is None


def test_degradation_implies_mi_ordering(rng):
    for _ in range(20):
        W = Channel(rng.dirichlet(np.ones(3), size=2))
        D = Channel(rng.dirichlet(np.ones(3), size=3))
        V = W.then(D)
        ok, wit = degradation_check(W, V)
        assert ok
        for _ in range(5):
            p = rng.dirichlet(np.ones(2))
            assert mutual_information(pair_joint(p, V), ["X"], ["Y"]) <= \
                mutual_information(pair_joint(p, W), ["X"], ["Y"]) + 1e-9
