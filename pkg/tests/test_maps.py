import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewmix import maps, presets
from skewmix.errors import BoundaryHitError, DomainError, ValidationError


def test_doubling_depth2_branches(doubling_cos):
    hs = maps.inverse_branches(doubling_cos.base, 2)
    assert len(hs) == 4
    ranges = sorted(h.range for h in hs)
    assert np.allclose(ranges, [(0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)])
    for h in hs:
        y = np.linspace(0.01, 0.99, 7)
        assert np.allclose(h.derivative(y), 0.25)
        assert np.allclose(4 * h(y) % 1.0, y)


def test_unequal_map_constants():
    u = presets.unequal_map()
    assert u.lam == pytest.approx(math.log(3))
    assert u.distortion == 0.0
    assert maps.covering_time(u, 1) >= 1


def test_rejected_map_fails_expansion():
    with pytest.raises(ValidationError):
        presets.rejected_map()


def test_birkhoff_roof_matches_orbit(doubling_cos):
    x = 0.1
    expect = sum(math.cos(2 * math.pi * (x * 2**j % 1.0)) for j in range(3))
    assert maps.birkhoff_roof(doubling_cos, 3, x) == pytest.approx(expect, abs=1e-14)


def test_birkhoff_roof_refuses_breakpoint(doubling_cos):
    with pytest.raises(BoundaryHitError):
        maps.birkhoff_roof(doubling_cos, 2, 0.25)


def test_roof_slope_depth1(doubling_cos):
    # (tau o h)'(1/2) for h(y) = y/2 is tau'(1/4)/2 = -pi, and +pi on the other branch
    hs = maps.inverse_branches(doubling_cos, 1)
    slopes = sorted(maps.roof_slope_along_branch(doubling_cos, h, 0.5) for h in hs)
    assert slopes == pytest.approx([-math.pi, math.pi], abs=1e-12)


def test_branch_domain_check(doubling_cos):
    h = maps.inverse_branches(doubling_cos, 1)[0]
    with pytest.raises(DomainError):
        h.check_domain(1.5)


def test_covering_time_doubling(doubling_cos):
    assert maps.covering_time(doubling_cos.base, 3) == 3


def test_branch_mass_sum_is_one_for_linear_maps():
    for k in (2, 3, 8):
        assert maps.branch_mass_sum(presets.times_map(k), 2) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), y=st.floats(0.001, 0.999))
def test_branch_composition_and_derivative_product(n, y):
    # h_n composed with f^n is the identity and |h'| multiplies along the word
    u = presets.unequal_map()
    for h in maps.inverse_branches(u, n):
        lo, hi = h.domain
        if not lo < y < hi:
            continue
        x = h(y)
        z = x
        dprod = 1.0
        for _ in range(n):
            dprod *= abs(float(u.derivative(z)))
            z = float(u(z))
        assert z == pytest.approx(y, abs=1e-10)
        assert abs(h.derivative(y)) == pytest.approx(1.0 / dprod, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(n=st.integers(1, 5))
def test_summability_unequal(n):
    # sum of |h'| over depth-n branches stays bounded for a full-branch expanding map
    assert maps.branch_mass_sum(presets.unequal_map(), n) < 4.0
