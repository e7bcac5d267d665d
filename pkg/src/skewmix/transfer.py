"""Twisted transfer operators on grid densities.

``L_b^n g(y) = sum_h exp(i b tau_n(h y)) g(h y) |h'(y)|`` over depth-n inverse branches.
Vertical mode ``k`` of the skew product (the factor ``exp(2 pi i k y)``) is carried
by ``L_b`` with ``b = -2 pi k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import MIN_NODES, GridDensity
from .errors import ConvergenceError, ResolutionError, ValidationError
from .maps import PiecewiseMap, SkewProduct, _owner

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000


def mode_twist(k):
    """Twist b carrying vertical Fourier mode k."""
    return -2.0 * np.pi * k


def phase_policy_nodes(c_tau, b):
    return max(MIN_NODES, int(math.ceil(16.0 * abs(c_tau * b) / math.pi)))


@dataclass(frozen=True)
class TransferConfig:
    grid_resolution: int
    twist: float = 0.0
    depth: int = 1

    def check(self, skew):
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        need = phase_policy_nodes(skew.c_tau if isinstance(skew, SkewProduct) else 0.0, self.twist)
        if self.grid_resolution < need:
            raise ResolutionError(
                f"N={self.grid_resolution} too coarse for C_tau*|b|; need N >= {need}", need
            )


def circle_nodes(n):
    return (np.arange(n) + 0.5) / n


def _table(obj, depth, n_nodes):
    """(node, branch) incidence with h(y), |h'(y)| and tau_n(h(y)) for every pair."""
    owner = _owner(obj)
    key = ("table", depth, n_nodes)
    if key in owner._cache:
        return owner._cache[key]
    bs = owner.branch_set(depth)
    y = circle_nodes(n_nodes)
    start = np.searchsorted(y, bs.dom_lo, side="left")
    stop = np.searchsorted(y, bs.dom_hi, side="left")
    counts = stop - start
    branch_idx = np.repeat(np.arange(len(bs)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    node_idx = np.repeat(start, counts) + offsets
    words = bs.words[branch_idx]
    if isinstance(obj, SkewProduct):
        x, d, tsum, _ = obj.pullback(words, y[node_idx])
    else:
        x, d, _, _ = owner.pullback(words, y[node_idx])
        tsum = np.zeros_like(x)
    table = (node_idx, x, np.abs(d), tsum)
    owner._cache[key] = table
    return table


def _evaluate(g, x):
    if isinstance(g, GridDensity):
        return g.evaluate(x)
    return np.asarray(g(x), dtype=complex) * np.ones(np.shape(x))


def apply_transfer(skew, cfg, g):
    """L_b^n g on the N cell midpoints of the circle; g is a GridDensity or a callable."""
    cfg.check(skew)
    node_idx, x, jac, tsum = _table(skew, cfg.depth, cfg.grid_resolution)
    vals = _evaluate(g, x) * jac
    if cfg.twist != 0.0:
        vals = vals * np.exp(1j * cfg.twist * tsum)
    n = cfg.grid_resolution
    out = np.bincount(node_idx, vals.real, n) + 1j * np.bincount(node_idx, vals.imag, n)
    return GridDensity(0.0, 1.0, out, _output_breaks(skew, cfg.depth, g))


def _output_breaks(obj, depth, g, cap=256):
    """Possible jump points of L^n g: branch-domain endpoints and images of g's jumps."""
    owner = _owner(obj)
    bs = owner.branch_set(depth)
    pts = set(np.concatenate([bs.dom_lo, bs.dom_hi]).round(15).tolist())
    if isinstance(g, GridDensity):
        for s in list(g.breaks) + [g.lo, g.hi]:
            z = s
            for _ in range(depth):
                z = owner(z)
            pts.add(round(float(z), 15))
    pts = sorted(p for p in pts if 1e-12 < p < 1 - 1e-12)
    return tuple(pts) if len(pts) <= cap else ()


def apply_skew_transfer_mode(skew, k, g_hat, n, resolution):
    """Vertical mode k of the two-dimensional transfer operator, iterated n times."""
    cfg = TransferConfig(resolution, mode_twist(k), n)
    return apply_transfer(skew, cfg, g_hat)


def iterate(skew, b, g, n, resolution):
    """Apply L_b one step at a time, returning [g_0, L_b g_0, ..., L_b^n g_0]."""
    cfg = TransferConfig(resolution, b, 1)
    cur = g if isinstance(g, GridDensity) else GridDensity.from_function(g, 0.0, 1.0, resolution)
    out = [cur]
    for _ in range(n):
        cur = apply_transfer(skew, cfg, cur)
        out.append(cur)
    return out


def invariant_density(pmap, tol=POWER_TOL, resolution=2**12, max_iter=POWER_MAX_ITER):
    """Fixed point of L_0 by power iteration from the constant density."""
    cfg = TransferConfig(resolution, 0.0, 1)
    rho = GridDensity.constant(1.0, 0.0, 1.0, resolution)
    residual = np.inf
    for _ in range(max_iter):
        nxt = apply_transfer(pmap, cfg, rho)
        nxt = nxt.scaled(1.0 / nxt.integral().real)
        residual = float(np.sum(np.abs(nxt.values - rho.values)) / resolution)
        rho = nxt
        if residual <= tol:
            return GridDensity(0.0, 1.0, rho.values.real.astype(complex), rho.breaks)
    raise ConvergenceError(f"power iteration residual {residual:.3g} above {tol:g}", residual)


@dataclass(frozen=True)
class DecayProfile:
    norms: np.ndarray
    fitted_rate: float
    fitted_stretched_rate: float
    twist: float = 0.0
    monotone: bool = True

    @property
    def gamma2(self):
        """fitted_rate * ln|b|, the rate in the form exp(-(gamma2/ln|b|) n)."""
        return self.fitted_rate * math.log(abs(self.twist)) if abs(self.twist) > 1 else float("nan")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,norm,ln_norm\n")
            for k, v in enumerate(self.norms):
                fh.write(f"{k},{v!r},{math.log(v) if v > 0 else float('-inf')!r}\n")


def _slope(t, v):
    keep = v > 1e-300
    if keep.sum() < 2:
        return float("nan")
    return float(-np.polyfit(t[keep], np.log(v[keep]), 1)[0])


def norm_decay_profile(skew, b, g, n_max, resolution=2**12, tol=1e-10):
    if b == 0:
        raise ValidationError("decay profile needs b != 0")
    seq = iterate(skew, b, g, n_max, resolution)
    norms = np.array([d.l1_mass() for d in seq])
    n = np.arange(n_max + 1, dtype=float)
    return DecayProfile(
        norms=norms,
        fitted_rate=_slope(n, norms),
        fitted_stretched_rate=_slope(np.sqrt(n), norms),
        twist=float(b),
        monotone=bool(np.all(np.diff(norms) <= tol * norms[0])),
    )


@dataclass(frozen=True)
class SpectralEstimate:
    radius: float
    per_start: list = field(default_factory=list)
    converged: bool = True
    twist: float = 0.0

    def to_json(self):
        return {
            "b": self.twist,
            "radius": self.radius,
            "per_start": self.per_start,
            "verdict": "converged" if self.converged else "inconclusive",
        }


def spectral_radius_estimate(skew, b, resolution=2**12, n_iter=200, window=50, starts=3, seed=0):
    """Late-time growth ratio of ||L_b^n g|| averaged over random smooth starts."""
    rng = np.random.default_rng(seed)
    cfg = TransferConfig(resolution, b, 1)
    x = circle_nodes(resolution)
    estimates = []
    halves = []
    for _ in range(starts):
        c = rng.normal(size=(2, 4))
        vals = 1.0 + sum(c[0, k] * np.cos(2 * np.pi * (k + 1) * x) + c[1, k] * np.sin(2 * np.pi * (k + 1) * x)
                         for k in range(4)) * 0.2
        g = GridDensity(0.0, 1.0, vals)
        logs = []
        total = 0.0
        for _ in range(n_iter):
            g = apply_transfer(skew, cfg, g)
            m = g.l1_mass()
            if m == 0.0:
                logs.append(-np.inf)
                break
            total += math.log(m)
            logs.append(total)
            g = g.scaled(1.0 / m)
        logs = np.array(logs)
        if not np.all(np.isfinite(logs)):
            estimates.append(0.0)
            halves.append((0.0, 0.0))
            continue
        late = logs[-window - 1 :]
        estimates.append(math.exp((late[-1] - late[0]) / window))
        mid = window // 2
        halves.append((math.exp((late[mid] - late[0]) / mid), math.exp((late[-1] - late[mid]) / (window - mid))))
    converged = all(abs(a - c) <= 1e-3 * max(a, c, 1e-300) for a, c in halves)
    return SpectralEstimate(float(np.mean(estimates)), [float(e) for e in estimates], converged, float(b))
