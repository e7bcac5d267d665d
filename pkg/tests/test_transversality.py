import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewmix import maps, presets, transversality as T
from skewmix.errors import ValidationError

TWO_PI = 2 * math.pi


def branch(skew, word):
    return next(h for h in maps.inverse_branches(skew, len(word)) if h.word == tuple(word))


def test_cone_eta_examples(doubling_cos):
    assert T.cone_eta(presets.skew_product("tripling_x")) == pytest.approx(0.5, abs=1e-12)
    assert T.cone_eta(presets.skew_product("doubling_const")) == 0.0
    assert T.cone_eta(doubling_cos) == pytest.approx(TWO_PI, abs=1e-12)


def test_cone_reversed():
    with pytest.raises(ValidationError):
        T.Cone(1.0, -1.0)


def test_push_cone_zero_roof():
    s = presets.skew_product("doubling_zero")
    for h in maps.inverse_branches(s, 1):
        c = T.push_cone(s, h, T.Cone.symmetric(3.0), 0.3)
        assert (c.lo, c.hi) == pytest.approx((-1.5, 1.5))


def test_uni_separation_depth1(doubling_cos):
    h1, h2 = branch(doubling_cos, [0]), branch(doubling_cos, [1])
    assert T.uni_separation(doubling_cos, 1, h1, h2, 0.5) == pytest.approx(TWO_PI, abs=1e-12)
    # finite-difference oracle on the two pullbacks
    e = 1e-6
    fd = [(math.cos(TWO_PI * h(0.5 + e)) - math.cos(TWO_PI * h(0.5 - e))) / (2 * e) for h in (h1, h2)]
    assert abs(fd[0] - fd[1]) == pytest.approx(TWO_PI, rel=1e-8)


def test_uni_separation_depth_mismatch(doubling_cos):
    h = branch(doubling_cos, [0])
    with pytest.raises(ValidationError):
        T.uni_separation(doubling_cos, 2, h, h, 0.5)


def test_constant_roof_no_separation():
    s = presets.skew_product("doubling_const")
    x = np.linspace(0.01, 0.99, 50)
    assert np.all(T.max_pair_separation(s, 3, x) == 0.0)
    assert not T.find_overlap_witness(s, (0.2, 0.45), 0.1).found


def test_coboundary_separation_depth10(coboundary):
    x = np.linspace(0.001, 0.999, 200)
    assert np.max(T.max_pair_separation(coboundary, 10, x)) < 0.05


def test_overlap_witness(doubling_cos):
    w = T.find_overlap_witness(doubling_cos, (0.2, 0.45), 0.1)
    assert w.found and w.n_delta <= 6 and w.separation > 0
    assert T.witness_holds(doubling_cos, w) >= 1.1


def test_witness_full_circle_depth(doubling_cos):
    w = T.find_overlap_witness(doubling_cos, (0.0, 1.0), 0.1)
    assert w.found and w.n_delta <= 3 and w.separation >= 1.0


def test_transversality_table(doubling_cos):
    t = T.transversality_table(doubling_cos, 0.125)
    assert t.found and len(t.per_interval) == 8
    assert t.delta > 0
    assert t.delta == min(p["Delta"] for p in t.per_interval)


def test_table_coboundary(coboundary):
    assert T.transversality_table(coboundary, 0.125, n_max=8).verdict == "cohomologous-suspected"


def test_detector_zero_roof():
    d = T.cohomology_detector(presets.skew_product("doubling_zero"))
    assert d.verdict == "cohomologous-suspected"
    assert np.max(np.abs(d.theta)) == 0.0


def test_detector_coboundary(coboundary):
    d = T.cohomology_detector(coboundary)
    assert d.verdict == "cohomologous-suspected"
    assert d.residual <= 1e-2
    assert np.max(np.abs(d.theta - TWO_PI * np.cos(TWO_PI * d.theta_x))) <= 1e-2


def test_detector_transversal(doubling_cos):
    d = T.cohomology_detector(doubling_cos)
    # the two depth-1 cones only touch at x = 1/2, so the first empty intersection is at depth 2
    assert d.verdict == "transversal" and d.depth <= 2


@settings(max_examples=20, deadline=None)
@given(x=st.floats(0.001, 0.999), n=st.integers(1, 4))
def test_cone_invariance(doubling_cos, x, n):
    K = T.Cone.symmetric(T.cone_eta(doubling_cos))
    for h in maps.inverse_branches(doubling_cos, n):
        assert K.contains(T.push_cone(doubling_cos, h, K, x), tol=1e-9)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.001, 0.999), w=st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)))
def test_cocycle(doubling_cos, x, w):
    # word (w1, ..., wn) applies branch w1 first, so h_w = h_{w1} o ... o h_{wn}
    K = T.Cone(-2.0, 5.0)
    deep = T.push_cone(doubling_cos, branch(doubling_cos, w), K, x)
    inner = branch(doubling_cos, w[1:])
    z = float(inner(x))
    step = T.push_cone(doubling_cos, branch(doubling_cos, w[:1]), K, z)
    step = T.push_cone(doubling_cos, inner, step, x)
    assert (deep.lo, deep.hi) == pytest.approx((step.lo, step.hi), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.001, 0.999), n=st.integers(1, 3))
def test_disjoint_cones_imply_separation(doubling_cos, x, n):
    K = T.Cone.symmetric(T.cone_eta(doubling_cos))
    hs = maps.inverse_branches(doubling_cos, n)
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            c1, c2 = T.push_cone(doubling_cos, hs[i], K, x), T.push_cone(doubling_cos, hs[j], K, x)
            if c1.disjoint(c2):
                assert T.uni_separation(doubling_cos, n, hs[i], hs[j], x) >= c1.gap(c2)


@settings(max_examples=12, deadline=None)
@given(n=st.integers(1, 12))
def test_coboundary_soundness(coboundary, n):
    x = np.linspace(0.0013, 0.9987, 97)
    sep = T.max_pair_separation(coboundary, n, x)
    assert np.max(sep) <= 2 * TWO_PI * 2.0**-n + 1e-12
