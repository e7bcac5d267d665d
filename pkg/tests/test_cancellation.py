import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewmix import cancellation as C, families as F, presets
from skewmix.density import GridDensity, log_modulus_holder
from skewmix.errors import BelowThresholdError, CannotReduceError, DomainError, SplitInfeasibleError, ValidationError
from skewmix.transversality import TransversalityWitness, find_overlap_witness

ALPHA2 = (math.sqrt(7) - 1) / 2


def pair(func, lo, hi, a, b, n=4096):
    return F.StandardPair(GridDensity.from_function(func, lo, hi, n), a, b, 1.0)


def synthetic(slope=100.0, w1=0.6, w2=0.4, b=50.0, n=4096):
    p1 = pair(lambda x: 2 * np.exp(1j * slope * x), 0.0, 0.5, slope / b, b, n)
    p2 = pair(lambda x: np.full_like(x, 2.0), 0.0, 0.5, slope / b, b, n)
    wit = TransversalityWitness(True, 1, [((0,), (1,))], (0.0, 0.5), slope / b, 0.5)
    return p1, w1, p2, w2, b, wit


def test_constants():
    assert C.ALPHA2 == pytest.approx(0.8228756555, abs=1e-10)
    k = C.KConstants.from_bounds(2.0, 1.0)
    assert k.K1 == pytest.approx(math.pi / 3) and k.K2 == pytest.approx(3 * math.pi)
    assert C.b_threshold(2.0, 0.5) == pytest.approx(4 * math.pi)


def test_split_uniform_pair():
    p = F.StandardPair(GridDensity.constant(2.0, 0.0, 0.5, 64), math.log(4), 0.0, 1.0)
    s = C.split_pair(p)
    assert s.c == pytest.approx(1 / 8)
    assert np.allclose(s.bar.values, 1 / 8) and np.allclose(s.tilde.values, 15 / 8)
    assert (s.bar_weight, s.tilde_weight) == pytest.approx((1 / 16, 15 / 16))


def test_split_infeasible():
    p = F.StandardPair(GridDensity.from_function(lambda x: 1e-3 + x, 0.0, 1.0, 64), 0.1, 0.0, 1.0)
    with pytest.raises(SplitInfeasibleError):
        C.split_pair(p)


def test_phase_difference_identical_pairs():
    p = pair(lambda x: np.exp(30j * x), 0.0, 0.5, 1.0, 30.0)
    x, th = C.phase_difference(p, p, 30.0, (0.1, 0.4))
    assert np.max(np.abs(th)) <= 1e-15


def test_phase_difference_domain():
    p = pair(lambda x: np.ones_like(x), 0.0, 0.5, 1.0, 30.0)
    with pytest.raises(DomainError):
        C.phase_difference(p, p, 30.0, (0.3, 0.7))


def test_phase_difference_depth1_branches(doubling_cos):
    # L_b of the constant density on the two depth-1 branches: Theta' = b d/dx[cos(pi x) - cos(pi x + pi)]
    b = 200.0
    x = np.linspace(0.3, 0.7, 4096)
    p1 = pair(lambda x: np.exp(1j * b * np.cos(np.pi * x)), 0.3, 0.7, 10.0, b)
    p2 = pair(lambda x: np.exp(1j * b * np.cos(np.pi * x + np.pi)), 0.3, 0.7, 10.0, b)
    xs, th = C.phase_difference(p1, p2, b, (0.3, 0.7), c_tau=doubling_cos.c_tau, c1=2 * math.pi)
    slope = np.gradient(th, xs)
    expect = -2 * np.pi * b * np.sin(np.pi * xs)
    assert np.max(np.abs(slope[2:-2] - expect[2:-2])) <= 1e-3 * np.max(np.abs(expect))
    assert C.phase_bounds_check(xs, th, b, 2 * math.pi, doubling_cos.c_tau)["sign_constant"]


def test_layout_linear_phase():
    x = np.linspace(0.0, 1.0, 20001)
    lay = C.oscillation_layout(x, 100 * x, 1.0, 1.0, 0.0)
    lengths = np.array([hi - lo for lo, hi in lay.I])
    assert np.all(lengths >= 2 * np.pi / 100 - 1e-12) and np.all(lengths <= 3 * np.pi / 100 + 1e-12)
    assert len(lay.I) >= math.floor(100 / (3 * math.pi))
    widths = np.array([hi - lo for lo, hi in lay.J])
    assert np.allclose(widths, (math.acos(0.25) - math.acos(0.5)) / 100, atol=1e-9)
    for lo, hi in lay.J:
        c = np.cos(100 * np.linspace(lo, hi, 50))
        assert np.all((c >= 0.25 - 1e-9) & (c <= 0.5 + 1e-9))


def test_layout_below_threshold():
    x = np.linspace(0.0, 1.0, 100)
    with pytest.raises(BelowThresholdError):
        C.oscillation_layout(x, 5 * x, 1.0, 1.0, 0.0)


def test_layout_not_monotone():
    x = np.linspace(0.0, 1.0, 1000)
    with pytest.raises(ValidationError):
        C.oscillation_layout(x, 100 * np.sin(3 * x), 1.0, 1.0, 0.0)


def test_kappa_examples():
    assert 0.4 / (2 * 0.6) == pytest.approx(1 / 3)
    k = C.build_kappa(None, 1 / 3)
    assert np.all(k(np.linspace(0, 1, 11)) == 1.0)
    with pytest.raises(ValidationError):
        C.build_kappa(None, 0.7)


@pytest.mark.parametrize("b", [200.0, 500.0, 1000.0])
def test_kappa_derivative_bound(b):
    c1, c_tau, k0 = 2.0, 1.0, 1 / 3
    x = np.linspace(0.0, 0.5, 200001)
    lay = C.oscillation_layout(x, 1.5 * b * c1 * x, b, c1, c_tau)
    kap = C.build_kappa(lay, k0)
    fine = np.linspace(0.0, 0.5, 2000001)
    measured = np.max(np.abs(kap.derivative(fine)))
    assert measured <= kap.max_derivative() * (1 + 1e-9)
    assert measured == pytest.approx(kap.max_derivative(), rel=1e-3)
    assert kap.max_derivative() <= lay.consts.C_kappa * k0 * b
    # middle thirds are flat at 1 - kappa0
    for lo, hi in lay.Jmid:
        assert np.allclose(kap(np.linspace(lo, hi, 7)), 1 - k0)


def test_cancel_synthetic():
    p1, w1, p2, w2, b, wit = synthetic()
    new, rep = C.cancel_pairs(p1, w1, p2, w2, b, wit, 0.0)
    assert rep.kappa0 == pytest.approx(1 / 3)
    assert rep.equivalence_residual <= 1e-10
    assert rep.cancellation_margin > 0
    assert rep.new_total < rep.old_total
    assert rep.alpha2_eff <= rep.alpha2_bound < 1
    assert rep.kappa_max_deriv <= rep.kappa_bound
    assert rep.k_bounds_hold and rep.phase["holds"]
    assert rep.new_regularity["tilde_H_within_4a"]


def test_apply_cancellation_density_unchanged():
    p1, w1, p2, w2, b, wit = synthetic()
    fam = F.StandardFamily((p1, p2), np.array([w1, w2]))
    out, rep = C.apply_cancellation(fam, 0, 1, b, wit, 0.0)
    assert out.total_weight < fam.total_weight
    assert rep.family_gamma > 0
    nf = out.pairs[0].density.n
    x = (np.arange(nf) + 0.5) * 0.5 / nf
    ref = w1 * p1.density.interp(x) + w2 * p2.density.interp(x)
    got = F.family_density(out, 2 * nf).values[:nf]
    assert np.sum(np.abs(got - ref)) * 0.5 / nf <= 1e-10


def test_cancel_below_threshold():
    p1, w1, p2, w2, _, wit = synthetic()
    with pytest.raises(BelowThresholdError):
        C.cancel_pairs(p1, w1, p2, w2, 5.0, wit, 0.0)


def test_tilde_n_schedule():
    assert C.tilde_n(500.0, 7.0, math.log(2)) == math.ceil(math.log(500) / math.log(2))
    assert C.tilde_n_measured(5.0, 7.0, math.log(2)) == 0
    nb = C.n_b_schedule(4, 500.0, 7.0, math.log(2))
    assert nb % 4 == 0 and nb > 4 + C.tilde_n(500.0, 7.0, math.log(2))


def test_delta_sanity(caplog, doubling_cos):
    # B = 10, delta = 0.02 is admissible (no warning); b = 1 then fails the b0 precondition
    params = C.WorkingParameters(7.0, 0.5, 10.0, math.log(2))
    fam = F.family_from_density(GridDensity.constant(1.0, 0.0, 1.0, 1024), 0.5, 7.0, 1.0)
    with caplog.at_level(logging.WARNING), pytest.raises(BelowThresholdError):
        C.weight_reduction_step(fam, 1.0, 0.02, doubling_cos, params)
    assert "B*delta" not in caplog.text


def test_cohomologous_cannot_reduce(coboundary):
    params = C.WorkingParameters(7.0, 1.0, 4.0, math.log(2))
    fam = F.family_from_density(GridDensity.constant(1.0, 0.0, 1.0, 1024), 1.0, 7.0, 500.0)
    with pytest.raises(CannotReduceError):
        C.weight_reduction_step(fam, 500.0, 0.125, coboundary, params)


@pytest.fixture(scope="module")
def reduction_b500(doubling_cos):
    params = C.WorkingParameters(7.0, 0.5, 6.0, math.log(2))
    fam = F.family_from_density(GridDensity.constant(1.0, 0.0, 1.0, 4096), 0.5, 7.0, 500.0, B=6.0)
    return C.weight_reduction_step(fam, 500.0, 0.04, doubling_cos, params)


def test_reduction_b500(reduction_b500):
    _, rep = reduction_b500
    assert rep.n_delta == 7
    assert rep.gamma1 > 0
    # regression value from the N = 2^12 run
    assert rep.gamma1 == pytest.approx(5.346911261389695e-09, rel=1e-4)
    assert rep.long_weight >= 0.75
    assert rep.tilde_n_b == 9
    for r in rep.reductions:
        assert r.equivalence_residual <= 1e-10
        assert r.cancellation_margin > 0
        assert r.alpha2_eff <= r.alpha2_bound
        assert r.kappa_max_deriv <= r.kappa_bound
        assert r.k_bounds_hold and r.phase["holds"]
        assert r.new_regularity["tilde_H_within_4a"]
    assert rep.restoration["restored"]


def test_reduction_keeps_density(reduction_b500, doubling_cos):
    fam, rep = reduction_b500
    assert fam.total_weight == pytest.approx(rep.new_total)
    assert rep.new_total < rep.old_total


def test_decay_loop(doubling_cos):
    params = C.WorkingParameters(7.0, 1.0, 4.0, math.log(2))
    g0 = GridDensity.constant(1.0, 0.0, 1.0, 1024)
    rep = C.decay_loop(g0, 16.0, 2, doubling_cos, params, 0.125, resolution=1024)
    assert rep.consistent
    assert rep.family_weights[2] < rep.family_weights[1] < rep.family_weights[0]
    assert all(d <= w * (1 + 1e-6) for d, w in zip(rep.direct_norms, rep.family_weights))


def test_decay_loop_below_b0(doubling_cos):
    params = C.WorkingParameters(7.0, 1.0, 4.0, math.log(2))
    with pytest.raises(BelowThresholdError):
        C.decay_loop(GridDensity.constant(1.0, 0.0, 1.0, 1024), 5.0, 1, doubling_cos, params, 0.125, resolution=1024)


def test_holder_split_constant():
    h = C.holder_to_families(lambda x: np.ones_like(x), 1.0, 0.5)
    assert h.shift == pytest.approx(2.0)
    assert all(np.allclose(p.density.values, -1.0 / p.length) for p in h.fluctuation.pairs)
    assert h.reconstruction_error <= 1e-12


def test_holder_split_sine():
    a = 4 * math.pi
    h = C.holder_to_families(lambda x: np.sin(2 * np.pi * x), a, 0.5)
    assert h.shift == pytest.approx(2.5, abs=1e-3)
    for p in h.fluctuation.pairs:
        assert log_modulus_holder(p.density) <= a


@settings(max_examples=20, deadline=None)
@given(c=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_holder_reconstruction(c):
    g = lambda x: c[0] * np.sin(2 * np.pi * x) + c[1] * np.cos(6 * np.pi * x) + 1j * c[2] * x
    assert C.holder_to_families(g, 3.0, 0.5, resolution=1024).reconstruction_error <= 1e-12


def test_alpha2_sharpness_grid():
    x = np.linspace(0.5, 50.0, 200001)
    assert np.max(C.alpha2_curve(x)) <= ALPHA2 + 1e-12
    assert C.alpha2_curve(0.5) == pytest.approx(ALPHA2, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 3.0), c=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_split_reconstruction_and_tilde(a, c):
    f = lambda x: np.exp(a * (0.5 * c[0] * x + 0.3 * c[1] * np.sin(3 * x))) * np.exp(2j * c[2] * x)
    g = GridDensity.from_function(f, 0.0, 0.5, 512).normalized()
    H = log_modulus_holder(g)
    p = F.StandardPair(g, max(H, 1e-3), 0.0, 1.0)
    s = C.split_pair(p)
    assert np.max(np.abs(s.bar.values + s.tilde.values - g.values)) <= 1e-12
    assert log_modulus_holder(s.tilde) <= 4 * p.a + 1e-9


@settings(max_examples=8, deadline=None)
@given(w=st.floats(0.2, 0.8), slope=st.floats(60.0, 160.0))
def test_equivalence_property(w, slope):
    p1, _, p2, _, b, wit = synthetic(slope=slope)
    new, rep = C.cancel_pairs(p1, w, p2, 1 - w, b, wit, 0.0)
    assert rep.equivalence_residual <= 1e-10
    assert rep.new_total < rep.old_total
    assert rep.cancellation_margin > 0
