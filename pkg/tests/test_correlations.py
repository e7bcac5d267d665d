import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewmix import correlations as K, presets
from skewmix.errors import ResolutionError, UnderdeterminedFitError


@pytest.fixture(scope="module")
def cos_obs(doubling_cos):
    return K.centered(K.trig_observable(1, 1), doubling_cos)


@pytest.fixture(scope="module")
def cos_series(doubling_cos, cos_obs):
    return K.correlation(doubling_cos, cos_obs, cos_obs, 30)


def oracle_1d(n, N=2**21):
    # averaging over y: cor(n) = 1/2 int cos 2 pi ((2^n - 1) x + tau_n(x)) dx
    x = (np.arange(N) + 0.5) / N
    tau = sum(np.cos(2 * np.pi * (2**j * x % 1.0)) for j in range(n))
    return 0.5 * np.mean(np.cos(2 * np.pi * (((2**n - 1) * x) % 1.0 + tau)))


def test_constant_observables(doubling_cos):
    one = K.Observable2D(lambda x, y: np.ones(np.broadcast(x, y).shape), mode_cap=1)
    ser = K.correlation(doubling_cos, one, one, 5, 1024)
    assert np.max(np.abs(ser.values)) <= 1e-14


def test_series_against_1d_oracle(cos_series):
    assert cos_series.modes == [-1, 1]
    assert cos_series.imag_residual <= 1e-14
    for n in range(11):
        assert cos_series.values[n] == pytest.approx(oracle_1d(n), abs=2e-6)


def test_cor1_vanishes(cos_series):
    # int e^{i theta + i 2 pi cos theta} d theta / 2 pi = i J_1(2 pi) is purely imaginary
    assert abs(cos_series.values[1]) <= 1e-14


def test_series_against_tensor_oracle(doubling_cos, cos_obs, cos_series):
    for n, nx in ((2, 2**12), (3, 2**13)):
        direct = K.correlation_direct(doubling_cos, cos_obs, cos_obs, n, nx=nx, ny=64)
        assert cos_series.values[n] == pytest.approx(direct, abs=1e-5)


def test_tensor_oracle_refuses_coarse(doubling_cos, cos_obs):
    with pytest.raises(ResolutionError):
        K.correlation_direct(doubling_cos, cos_obs, cos_obs, 10, nx=1024)


def test_correlation_refuses_coarse(doubling_cos, cos_obs):
    with pytest.raises(ResolutionError):
        K.correlation(doubling_cos, cos_obs, cos_obs, 3, resolution=64)


def test_mode_sum_vertical_only(doubling_cos):
    # psi depends on y only: every mode evolves independently
    phi = K.Observable2D(lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y), mode_cap=1)
    psi = K.Observable2D(lambda x, y: np.cos(2 * np.pi * y) + 0 * x, mode_cap=1)
    ser = K.correlation(doubling_cos, phi, psi, 4)
    terms = K.mode_terms(doubling_cos, phi, psi, 4)
    assert np.allclose(ser.values, sum(terms.values()).real, atol=1e-15)
    direct = K.correlation_direct(doubling_cos, phi, psi, 2, nx=2**12)
    assert ser.values[2] == pytest.approx(direct, abs=1e-5)


def test_single_mode_bound(doubling_cos, cos_obs, cos_series):
    sb = K.mode_split_bound(doubling_cos, cos_obs, cos_obs, 5, b0=100.0, series=cos_series)
    rho = K._density(doubling_cos, 2**12)
    x = (np.arange(2**12) + 0.5) / 2**12
    c = cos_obs.coefficients(x, 1)
    from skewmix.transfer import iterate
    from skewmix.density import GridDensity
    g = GridDensity(0.0, 1.0, rho.values * c[2])
    l1 = iterate(doubling_cos, -2 * np.pi, g, 5, 2**12)[-1].l1_mass()
    assert sb.tail == 0.0 and sb.large == 0.0
    assert sb.bound == pytest.approx(2 * l1 * np.max(np.abs(c[0])), rel=1e-10)
    assert sb.holds


@pytest.mark.parametrize("n", [10, 20, 30])
def test_split_bound_holds(doubling_cos, cos_obs, cos_series, n):
    sb = K.mode_split_bound(doubling_cos, cos_obs, cos_obs, n, b0=10.0, series=cos_series)
    assert sb.holds and sb.measured < sb.bound


@pytest.mark.parametrize("g2,n", [(0.5, 20), (0.1, 7), (1.3, 50), (2.0, 3), (0.05, 400)])
def test_split_point_identity(g2, n):
    L, bound = K.split_point(g2, n)
    L0, b0 = K.split_closed_form(g2, n)
    assert L == pytest.approx(math.exp(math.sqrt(g2 * n / 2)), rel=1e-10)
    assert bound == pytest.approx(2 * math.exp(-math.sqrt(g2 * n / 2)), rel=1e-10)
    assert (L, bound) == pytest.approx((L0, b0), rel=1e-10)


def test_split_point_not_the_minimizer():
    L, bound = K.split_point(0.5, 20)
    Lmin, vmin = K.split_minimum(0.5, 20)
    assert Lmin == pytest.approx(6.92, abs=0.01)
    f = lambda L: L * math.exp(-0.5 * 20 / math.log(L)) + 1 / L
    assert vmin < f(L) <= bound + 1e-12


def test_fit_exact_model():
    n = np.arange(0, 31)
    fit = K.fit_stretched_exponential((n, 3 * np.exp(-0.7 * np.sqrt(n))))
    assert (fit.C, fit.gamma3) == pytest.approx((3.0, 0.7), abs=1e-6)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_exponential_input():
    n = np.arange(0, 31)
    assert K.fit_stretched_exponential((n, np.exp(-0.3 * n))).gamma3 > 0


def test_fit_floor():
    n = np.arange(0, 31)
    v = np.where(n < 20, np.exp(-np.sqrt(n)), 1e-15)
    fit = K.fit_stretched_exponential((n, v))
    assert fit.points == 16
    with pytest.raises(UnderdeterminedFitError):
        K.fit_stretched_exponential((n, np.full(31, 1e-14)))


def test_series_csv(tmp_path, cos_series):
    path = tmp_path / "decay.csv"
    cos_series.to_csv(path, {10: 0.5})
    rows = path.read_text().splitlines()
    assert rows[0] == "n,cor,bound" and len(rows) == 32
    assert rows[11].endswith(",0.5")


@settings(max_examples=15, deadline=None)
@given(kx=st.integers(-3, 3), ky=st.integers(-3, 3), ph=st.floats(0.0, 1.0), s=st.floats(-1.0, 1.0))
def test_measure_invariance(doubling_cos, kx, ky, ph, s):
    base = lambda x, y: np.cos(2 * np.pi * (kx * x + ky * y + ph)) + s * np.exp(np.sin(2 * np.pi * x) + np.cos(2 * np.pi * y))
    phi = K.Observable2D(base, mode_cap=8)
    pushed = K.Observable2D(lambda x, y: base(*K.skew_orbit(doubling_cos, x, y, 1)), mode_cap=8)
    a = K.nu_integral(doubling_cos, phi, 2**12, 256)
    b = K.nu_integral(doubling_cos, pushed, 2**12, 256)
    assert abs(a - b) <= 1e-6 * max(1.0, abs(a))


@settings(max_examples=10, deadline=None)
@given(w=st.floats(0.2, 1.5), shift=st.floats(0.0, 1.0))
def test_fourier_decay(w, shift):
    # |phi_k| <= sup|d^2 phi / dy^2| / (2 pi k)^2
    f = lambda x, y: np.exp(w * np.cos(2 * np.pi * (y + shift * x)))
    y = np.linspace(0, 1, 4001)
    u = w * np.cos(2 * np.pi * y)
    d2 = np.exp(u) * ((2 * np.pi * w * np.sin(2 * np.pi * y)) ** 2 - (2 * np.pi) ** 2 * w * np.cos(2 * np.pi * y))
    obs = K.Observable2D(f, mode_cap=16)
    norms = obs.fourier_norms(16, nx=64)
    k = np.abs(np.arange(-16, 17))
    nz = k > 0
    assert np.all(norms[nz] <= np.max(np.abs(d2)) / (2 * np.pi * k[nz]) ** 2 + 1e-14)
