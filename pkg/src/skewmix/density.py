"""Complex densities sampled on uniform grids, and their regularity functionals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDensityError, ValidationError

MIN_NODES = 16


def holder_estimate(values, dx, alpha):
    """max |v[i+m] - v[i]| / (m dx)^alpha over dyadic node separations m."""
    values = np.asarray(values)
    best = 0.0
    m = 1
    while m < len(values):
        diff = np.abs(values[m:] - values[:-m])
        best = max(best, float(diff.max()) / (m * dx) ** alpha)
        m *= 2
    return best


def required_nodes(phase_slope, length):
    """Node count keeping the per-node phase increment well below pi."""
    return int(math.ceil(16.0 * abs(phase_slope) * length / math.pi))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Samples of a complex function on [lo, hi) at the N cell midpoints.

    Integrals use the composite midpoint rule; between nodes the function is
    interpolated linearly in (log|rho|, unwrapped arg rho) when it has no zeros,
    and linearly in the complex plane otherwise.  ``breaks`` lists known jump
    points; interpolation never straddles one.
    """

    lo: float
    hi: float
    values: np.ndarray
    breaks: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < MIN_NODES:
            raise ValidationError(f"need at least {MIN_NODES} nodes, got {vals.size}")
        if not self.hi > self.lo:
            raise ValidationError("empty support interval")
        if self.hi - self.lo > 1.0 + 1e-12:
            raise ValidationError("support longer than the circle")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("non-finite density values")

    @classmethod
    def from_function(cls, func, lo, hi, n):
        nodes = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        return cls(float(lo), float(hi), np.asarray(func(nodes), dtype=complex) * np.ones(n))

    @classmethod
    def constant(cls, value, lo, hi, n):
        return cls(float(lo), float(hi), np.full(n, value, dtype=complex))

    # -- geometry ---------------------------------------------------------------------
    @property
    def n(self):
        return self.values.size

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def spacing(self):
        return self.length / self.n

    @property
    def nodes(self):
        return self.lo + (np.arange(self.n) + 0.5) * self.spacing

    @property
    def modulus(self):
        return np.abs(self.values)

    @property
    def phase(self):
        """Unwrapped argument at the nodes (adjacent jumps reduced into (-pi, pi])."""
        return np.unwrap(np.angle(self.values))

    # -- integrals ----------------------------------------------------------------------
    def l1_mass(self):
        return float(self.spacing * np.sum(self.modulus))

    def integral(self):
        return complex(self.spacing * np.sum(self.values))

    def cumulative_mass(self, x):
        """int_lo^x |rho|, piecewise linear and consistent with the midpoint rule."""
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        t = (x - self.lo) / self.spacing
        k = np.clip(np.floor(t).astype(int), 0, self.n - 1)
        edges = np.concatenate([[0.0], np.cumsum(self.modulus)]) * self.spacing
        out = edges[k] + (t - k) * self.spacing * self.modulus[k]
        return out if out.ndim else float(out)

    def mass_between(self, a, b):
        return self.cumulative_mass(b) - self.cumulative_mass(a)

    # -- evaluation ---------------------------------------------------------------------
    def _interp_coords(self, x):
        t = (np.asarray(x, dtype=float) - self.lo) / self.spacing - 0.5
        t = np.clip(t, -0.5, self.n - 0.5)
        i = np.clip(np.floor(t).astype(int), 0, self.n - 2)
        frac = t - i
        for s in self.breaks:
            j = int(math.floor((s - self.lo) / self.spacing - 0.5))
            if j < 0 or j > self.n - 2:
                continue
            straddle = i == j
            left = straddle & (frac < (s - self.lo) / self.spacing - 0.5 - j)
            right = straddle & ~left
            if j >= 1:
                i = np.where(left, j - 1, i)
                frac = np.where(left, frac + 1.0, frac)
            if j <= self.n - 3:
                i = np.where(right, j + 1, i)
                frac = np.where(right, frac - 1.0, frac)
        return i, frac

    def interp(self, x):
        """Interpolated value, clamping x to the closed support."""
        i, frac = self._interp_coords(x)
        mod = self.modulus
        if np.all(mod > 0):
            logm = np.log(mod)
            ph = self.phase
            lm = logm[i] + frac * (logm[i + 1] - logm[i])
            p = ph[i] + frac * (ph[i + 1] - ph[i])
            return np.exp(lm + 1j * p)
        v = self.values
        return v[i] + frac * (v[i + 1] - v[i])

    def evaluate(self, x):
        """Interpolated value, zero outside the half-open support [lo, hi)."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x < self.hi)
        out = np.zeros(x.shape, dtype=complex)
        if np.any(inside):
            out[inside] = self.interp(x[inside])
        return out

    def resample(self, lo, hi, n):
        nodes = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        return GridDensity(float(lo), float(hi), self.interp(nodes))

    # -- arithmetic ---------------------------------------------------------------------
    def with_values(self, values):
        return GridDensity(self.lo, self.hi, values, self.breaks)

    def scaled(self, c):
        return self.with_values(self.values * c)

    def normalized(self):
        mass = self.l1_mass()
        if mass <= 0:
            raise DegenerateDensityError("cannot normalize a density of zero mass")
        return self.scaled(1.0 / mass)

    # -- io -----------------------------------------------------------------------------
    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "re", "im"])
            for x, v in zip(self.nodes, self.values):
                w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path, lo, hi):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        vals = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
        return cls(float(lo), float(hi), vals)


@dataclass(frozen=True)
class RegularityReport:
    l1_mass: float
    holder_log: float
    arg_slope: float
    inf_mod: float
    sup_mod: float


def l1_mass(g):
    return g.l1_mass()


def log_modulus_holder(g, alpha=1.0):
    mod = g.modulus
    if np.any(mod <= 0):
        raise DegenerateDensityError("zero modulus node: log-modulus undefined")
    return holder_estimate(np.log(mod), g.spacing, alpha)


def arg_slope(g):
    ph = g.phase
    return float(np.max(np.abs(np.gradient(ph, g.spacing))))


def regularity(g, alpha=1.0):
    mod = g.modulus
    return RegularityReport(
        l1_mass=g.l1_mass(),
        holder_log=log_modulus_holder(g, alpha),
        arg_slope=arg_slope(g),
        inf_mod=float(mod.min()),
        sup_mod=float(mod.max()),
    )


def comparability_check(g, a, J, J2, alpha=1.0):
    """Are inf|rho|, Avg_J|rho|, Avg_J'|rho| and sup|rho| pairwise within e^a?"""
    if log_modulus_holder(g, alpha) > a * (1 + 1e-12):
        raise ValidationError("precondition H(rho) <= a fails")
    vals = [float(g.modulus.min()), float(g.modulus.max())]
    for lo, hi in (J, J2):
        lo, hi = max(lo, g.lo), min(hi, g.hi)
        if hi <= lo:
            raise ValidationError("averaging interval outside the support")
        vals.append(g.mass_between(lo, hi) / (hi - lo))
    return max(vals) <= math.exp(a) * min(vals) * (1 + 1e-12)
