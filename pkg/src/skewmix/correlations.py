"""Correlations of the skew product through its vertical Fourier modes.

With nu = rho dx dy and phi = sum_k phi_k(x) e^{2 pi i k y},

    int phi . psi o F^n dnu = sum_k int L_{b_k}^n(rho phi_k) psi_{-k} dx,   b_k = -2 pi k,

so each mode is pushed forward by a one-dimensional twisted operator and the x-integral
is taken on the same grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .density import GridDensity
from .errors import ResolutionError, UnderdeterminedFitError, ValidationError
from .maps import SkewProduct
from .transfer import (
    TransferConfig,
    apply_transfer,
    circle_nodes,
    invariant_density,
    mode_twist,
    norm_decay_profile,
    phase_policy_nodes,
)

FLOOR = 1e-13
MODE_TOL = 1e-14


@dataclass(frozen=True)
class Observable2D:
    """phi(x, y) on the torus, vectorized in both arguments."""

    func: Callable
    mode_cap: int = 64
    tag: str = "C2"
    name: str = ""

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def coefficients(self, x, cap=None):
        """phi_k(x) for k = -cap..cap, shape (2 cap + 1, len(x))."""
        cap = self.mode_cap if cap is None else cap
        m = max(8 * cap, 64)
        y = np.arange(m) / m
        vals = np.asarray(self(np.asarray(x)[:, None], y[None, :]), dtype=complex)
        vals = vals * np.ones((len(x), m))
        spec = np.fft.fft(vals, axis=1) / m
        ks = np.arange(-cap, cap + 1)
        return spec[:, ks % m].T

    def fourier_norms(self, cap=None, nx=256):
        """sup_x |phi_k(x)| for k = -cap..cap."""
        x = circle_nodes(nx)
        return np.max(np.abs(self.coefficients(x, cap)), axis=1)

    def sup(self, n=256):
        x = circle_nodes(n)
        return float(np.max(np.abs(self(x[:, None], x[None, :]))))


def trig_observable(kx, ky, phase=0.0, name=None):
    """cos 2 pi (kx x + ky y + phase)."""
    return Observable2D(
        lambda x, y: np.cos(2 * np.pi * (kx * x + ky * y + phase)),
        mode_cap=max(abs(ky), 1),
        tag="smooth",
        name=name or f"cos2pi({kx}x+{ky}y)",
    )


def centered(obs, skew, resolution=2**12):
    """obs minus its nu-mean."""
    mean = nu_integral(skew, obs, resolution, 8 * max(obs.mode_cap, 8))
    return Observable2D(lambda x, y: obs(x, y) - mean, obs.mode_cap, obs.tag, obs.name + "-mean")


def _density(skew, resolution):
    base = skew.base if isinstance(skew, SkewProduct) else skew
    return invariant_density(base, resolution=resolution)


def nu_integral(skew, obs, nx=2**12, ny=64, rho=None):
    """int obs dnu by tensor midpoint quadrature with weight rho(x)."""
    rho = _density(skew, nx) if rho is None else rho
    x = circle_nodes(nx)
    y = np.arange(ny) / ny
    vals = np.asarray(obs(x[:, None], y[None, :]), dtype=complex) * np.ones((nx, ny))
    return complex(np.sum(vals.mean(axis=1) * rho.values.real) / nx)


def skew_orbit(skew, x, y, n):
    """F^n(x, y) = (f^n x, y + tau_n(x)) mod 1."""
    x = np.asarray(x, dtype=float).copy()
    y = np.asarray(y, dtype=float).copy()
    for _ in range(n):
        y = y + skew.roof(x)
        x = skew.base(x)
    return x, np.mod(y, 1.0)


@dataclass
class CorrelationSeries:
    n: np.ndarray
    values: np.ndarray
    imag_residual: float = 0.0
    modes: list = field(default_factory=list)
    tail_bound: float = 0.0
    resolution: int = 0

    def fit(self, n_min=4):
        return fit_stretched_exponential(self, n_min=n_min)

    def to_csv(self, path, bounds=None):
        with open(path, "w") as fh:
            fh.write("n,cor,bound\n")
            for k, (n, v) in enumerate(zip(self.n, self.values)):
                bd = "" if bounds is None or k not in bounds else repr(float(bounds[k]))
                fh.write(f"{int(n)},{float(v)!r},{bd}\n")


def mode_terms(skew, phi, psi, n_max, resolution=2**12, cap=None, rho=None):
    """Per-mode series I_k(n) = int L_{b_k}^n(rho phi_k) psi_{-k}, for the modes that matter."""
    cap = min(phi.mode_cap, psi.mode_cap) if cap is None else cap
    rho = _density(skew, resolution) if rho is None else rho
    x = circle_nodes(resolution)
    ph = phi.coefficients(x, cap)
    ps = psi.coefficients(x, cap)
    scale = max(np.max(np.abs(ph)) * np.max(np.abs(ps)), 1e-300)
    out = {}
    for i, k in enumerate(range(-cap, cap + 1)):
        a_k, c_k = ph[i], ps[2 * cap - i]  # psi_{-k}
        if np.max(np.abs(a_k)) * np.max(np.abs(c_k)) <= MODE_TOL * scale:
            continue
        b = mode_twist(k)
        need = phase_policy_nodes(skew.c_tau, b)
        if resolution < need:
            raise ResolutionError(f"mode {k} needs N >= {need}", need)
        cfg = TransferConfig(resolution, b, 1)
        g = GridDensity(0.0, 1.0, rho.values * a_k, rho.breaks)
        series = [complex(np.sum(g.values * c_k) / resolution)]
        for _ in range(n_max):
            g = apply_transfer(skew, cfg, g)
            series.append(complex(np.sum(g.values * c_k) / resolution))
        out[k] = np.array(series)
    return out


def correlation(skew, phi, psi, n_max, resolution=2**12, cap=None):
    """cor(n) = int phi . psi o F^n dnu - int phi dnu int psi dnu for n = 0..n_max."""
    rho = _density(skew, resolution)
    terms = mode_terms(skew, phi, psi, n_max, resolution, cap, rho)
    x = circle_nodes(resolution)
    c = min(phi.mode_cap, psi.mode_cap) if cap is None else cap
    m_phi = complex(np.sum(rho.values * phi.coefficients(x, 0)[0]) / resolution)
    m_psi = complex(np.sum(rho.values * psi.coefficients(x, 0)[0]) / resolution)
    total = sum(terms.values()) if terms else np.zeros(n_max + 1, dtype=complex)
    total = total - m_phi * m_psi
    tail = _fourier_tail(phi, psi, c)
    return CorrelationSeries(
        n=np.arange(n_max + 1),
        values=total.real,
        imag_residual=float(np.max(np.abs(total.imag))),
        modes=sorted(terms),
        tail_bound=tail,
        resolution=resolution,
    )


def _fourier_tail(phi, psi, cap, extra=4):
    """Bound on the modes beyond the cap: C |k|^-2 decay fitted on cap < |k| <= extra * cap."""
    wide = extra * max(cap, 1)
    norms = phi.fourier_norms(wide)
    ks = np.abs(np.arange(-wide, wide + 1))
    out = ks > cap
    C = float(np.max(norms[out] * ks[out].astype(float) ** 2))
    if C <= MODE_TOL * max(float(norms.max()), 1e-300):
        return 0.0
    return 2.0 * C * psi.sup() / max(cap, 1)


def correlation_direct(skew, phi, psi, n, nx=2**12, ny=64):
    """Tensor-grid oracle for small n: sum over nodes of phi . psi o F^n . rho."""
    slope = float(np.max(np.abs(skew.base.derivative(circle_nodes(1024)))))
    need = int(math.ceil(32 * slope**n * max(1.0, skew.c_tau)))
    if nx < need:
        raise ResolutionError(f"n = {n} needs nx >= {need}", need)
    rho = _density(skew, nx)
    x = circle_nodes(nx)
    y = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(x, y, indexing="ij")
    fx, fy = skew_orbit(skew, X.ravel(), Y.ravel(), n)
    w = rho.values.real[:, None]
    a = phi(X, Y)
    bval = psi(fx, fy).reshape(X.shape)
    joint = np.sum(a * bval * w) / (nx * ny)
    return float(np.real(joint - np.sum(a * w) / (nx * ny) * np.sum(psi(X, Y) * w) / (nx * ny)))


# ---------------------------------------------------------------------------------------
# split point and the mode-split bound
# ---------------------------------------------------------------------------------------


def split_point(gamma2, n):
    """L balancing L e^{-gamma2 n / ln L} against 1/L, found by root bracketing; and 2/L."""
    if gamma2 <= 0 or n <= 0:
        raise ValidationError("need gamma2 > 0 and n > 0")
    f = lambda u: 2.0 * u - gamma2 * n / u
    u = brentq(f, 1e-12, max(1.0, gamma2 * n), xtol=1e-15, rtol=1e-15)
    return math.exp(u), 2.0 * math.exp(-u)


def split_closed_form(gamma2, n):
    u = math.sqrt(gamma2 * n / 2.0)
    return math.exp(u), 2.0 * math.exp(-u)


def split_minimum(gamma2, n):
    """Exact minimizer of L e^{-gamma2 n / ln L} + 1/L over L > 1 (for comparison)."""
    F = lambda u: math.exp(u - gamma2 * n / u) + math.exp(-u)
    hi = max(2.0, 2 * math.sqrt(gamma2 * n))
    res = minimize_scalar(F, bounds=(1e-6, hi), method="bounded", options={"xatol": 1e-12})
    return math.exp(res.x), float(res.fun)


@dataclass(frozen=True)
class DecayEnvelope:
    """C e^{-gamma2 n / ln|b|} dominating the sampled ||L_b^n g|| for |b| >= b0."""

    C: float
    gamma2: float
    b_samples: tuple

    def __call__(self, n, b):
        return self.C * math.exp(-self.gamma2 * n / math.log(abs(b)))


def fit_decay_envelope(skew, b_samples, n_max=20, resolution=2**12, g=None):
    """Smallest gamma2 over the sampled twists, then the C making it an envelope."""
    g = GridDensity.constant(1.0, 0.0, 1.0, resolution) if g is None else g
    profiles = [norm_decay_profile(skew, b, g, n_max, resolution) for b in b_samples]
    gamma2 = min(p.gamma2 for p in profiles)
    if not gamma2 > 0:
        raise ValidationError("decay fit gives no positive rate")
    n = np.arange(n_max + 1)
    C = 1.0
    for p, b in zip(profiles, b_samples):
        C = max(C, float(np.max(p.norms * np.exp(gamma2 * n / math.log(abs(b))))))
    return DecayEnvelope(C, gamma2, tuple(float(b) for b in b_samples))


@dataclass
class SplitBound:
    n: int
    bound: float
    measured: float
    holds: bool
    small: float
    large: float
    tail: float
    split_L: float = float("nan")

    def to_json(self):
        return dict(self.__dict__)


def mode_split_bound(skew, phi, psi, n, b0, mode_cap=None, envelope=None, resolution=2**12, series=None):
    """Mode-by-mode bound on |cor(n)|, compared with the measured value.

    Modes with |b| < b0 use the measured ||L_b^n(rho phi_k)||_1 sup|psi_{-k}|.  Modes with
    b0 <= |b| <= L use the decay envelope, modes beyond L use ||L_b|| <= 1, and modes beyond
    the cap use the Fourier tail.
    """
    cap = min(phi.mode_cap, psi.mode_cap) if mode_cap is None else mode_cap
    rho = _density(skew, resolution)
    x = circle_nodes(resolution)
    ph = phi.coefficients(x, cap)
    ps = psi.coefficients(x, cap)
    scale = max(np.max(np.abs(ph)) * np.max(np.abs(ps)), 1e-300)
    L = split_closed_form(envelope.gamma2, n)[0] if envelope is not None else float("inf")
    small = large = 0.0
    for i, k in enumerate(range(-cap, cap + 1)):
        a_k, c_k = ph[i], ps[2 * cap - i]
        sup_c = float(np.max(np.abs(c_k)))
        if np.max(np.abs(a_k)) * sup_c <= MODE_TOL * scale:
            continue
        b = mode_twist(k)
        g = GridDensity(0.0, 1.0, rho.values * a_k, rho.breaks)
        if k == 0:
            # the mean is subtracted: only the non-constant part of L_0^n matters
            mean = g.integral()
            pushed = apply_transfer(skew, TransferConfig(resolution, 0.0, 1), g) if n else g
            for _ in range(max(n - 1, 0)):
                pushed = apply_transfer(skew, TransferConfig(resolution, 0.0, 1), pushed)
            small += float(np.sum(np.abs(pushed.values - mean * rho.values)) / resolution) * sup_c
        elif abs(b) < b0:
            cfg = TransferConfig(resolution, b, 1)
            for _ in range(n):
                g = apply_transfer(skew, cfg, g)
            small += g.l1_mass() * sup_c
        else:
            if envelope is None:
                raise ValidationError(f"mode {k} has |b| >= b0 but no decay envelope was given")
            decay = envelope(n, b) if abs(b) <= L else 1.0
            large += decay * g.l1_mass() * sup_c
    tail = _fourier_tail(phi, psi, cap)
    if series is None:
        series = correlation(skew, phi, psi, n, resolution, cap)
    measured = abs(float(series.values[n]))
    bound = small + large + tail
    return SplitBound(n, bound, measured, measured <= bound, small, large, tail, L)


# ---------------------------------------------------------------------------------------
# stretched-exponential fit
# ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class StretchedFit:
    C: float
    gamma3: float
    r2: float
    points: int

    @property
    def passed(self):
        return self.gamma3 > 0

    def to_json(self):
        return {"C": self.C, "gamma3": self.gamma3, "r2": self.r2, "points": self.points,
                "verdict": "pass" if self.passed else "fail"}


def fit_stretched_exponential(series, n_min=4, floor=FLOOR, min_points=8):
    """Least squares of ln|cor(n)| against sqrt(n): ln|cor| = ln C - gamma3 sqrt(n)."""
    if isinstance(series, CorrelationSeries):
        n, v = series.n, series.values
    else:
        n, v = series
    n = np.asarray(n, dtype=float)
    v = np.abs(np.asarray(v, dtype=float))
    keep = (n >= n_min) & (v > floor)
    if keep.sum() < min_points:
        raise UnderdeterminedFitError(f"only {int(keep.sum())} usable points; need {min_points}")
    s, lv = np.sqrt(n[keep]), np.log(v[keep])
    slope, icpt = np.polyfit(s, lv, 1)
    pred = icpt + slope * s
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return StretchedFit(float(math.exp(icpt)), float(-slope), r2, int(keep.sum()))


def write_fit(path, fit):
    with open(path, "w") as fh:
        json.dump(fit.to_json(), fh, indent=2)
