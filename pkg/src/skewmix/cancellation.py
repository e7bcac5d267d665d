"""Oscillatory cancellation between two overlapping standard pairs.

Two pairs whose phases rotate against each other are split into constant-modulus
parts ``c e^{i Theta_j}`` and remainders.  On stretches where ``cos`` of the phase
difference lies in [1/4, 1/2], part of the first constant-modulus piece is moved
onto the second through a C^1 weight kappa; the family density is unchanged while
its total weight drops.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .density import GridDensity, arg_slope, holder_estimate, log_modulus_holder, required_nodes
from .errors import (
    BelowThresholdError,
    CancellationViolation,
    CannotReduceError,
    DomainError,
    ResolutionError,
    SplitInfeasibleError,
    ValidationError,
)
from .families import (
    IterationRecord,
    StandardFamily,
    StandardPair,
    boundary_measure,
    family_density,
    family_from_density,
    iterate_family,
)
from .transfer import TransferConfig, apply_transfer
from .transversality import find_overlap_witness

log = logging.getLogger(__name__)

ALPHA1 = 0.5
ALPHA2 = (math.sqrt(7.0) - 1.0) / 2.0
COS_HI = 0.5
COS_LO = 0.25
ARC = math.acos(COS_LO) - math.acos(COS_HI)
MAX_FINE_NODES = 2**23
NODE_RTOL = 1e-12


def alpha2_curve(x):
    """sqrt(1 + x + x^2) - x, the smallest admissible alpha_2 at ratio x = kappa0 w1 / w2."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x + x * x) - x


def b_threshold(c1, delta):
    """Smallest |b| for which a full phase oscillation fits in the overlap."""
    return 4.0 * math.pi / (c1 * delta)


@dataclass(frozen=True)
class KConstants:
    K1: float
    K2: float
    K3: float
    K4: float

    @classmethod
    def from_bounds(cls, c1, c_tau):
        return cls(
            K1=math.pi / (c_tau + c1),
            K2=6.0 * math.pi / c1,
            K3=ARC / (2.0 * (c_tau + c1)),
            K4=2.0 * ARC / c1,
        )

    @property
    def C_kappa(self):
        return 18.0 / self.K3


# ---------------------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitPair:
    bar: GridDensity
    tilde: GridDensity
    bar_weight: float
    tilde_weight: float
    c: float


def split_pair(pair, weight=1.0, a=None):
    """rho = c e^{i arg rho} + (|rho| - c) e^{i arg rho} with c = e^{-a}/2."""
    a = pair.a if a is None else a
    c = 0.5 * math.exp(-a)
    g = pair.density
    mod = g.modulus
    if mod.min() <= c:
        raise SplitInfeasibleError(f"inf|rho| = {mod.min():.3g} <= c = {c:.3g}")
    unit = g.values / mod
    bar = g.with_values(c * unit)
    tilde = g.with_values((mod - c) * unit)
    return SplitPair(bar, tilde, weight * bar.l1_mass(), weight * tilde.l1_mass(), c)


# ---------------------------------------------------------------------------------------
# phase difference and oscillation layout
# ---------------------------------------------------------------------------------------


def phase_difference(pair1, pair2, b, overlap, n=None, c_tau=None, c1=None):
    """Unwrapped arg(rho_1) - arg(rho_2) on a uniform grid over the overlap."""
    lo, hi = overlap
    for p in (pair1, pair2):
        if lo < p.interval[0] - 1e-14 or hi > p.interval[1] + 1e-14:
            raise DomainError("overlap not contained in both pair intervals")
    slope = 2.0 * abs(b) * ((c_tau or 0.0) + (c1 or 0.0)) or max(pair1.a, pair2.a) * 2.0 * abs(b)
    need = max(16, required_nodes(slope, hi - lo))
    if n is None:
        n = need
    elif n < need:
        raise ResolutionError(f"{n} nodes too few for the phase difference; need {need}", need)
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    z = pair1.density.interp(x) * np.conj(pair2.density.interp(x))
    theta = np.unwrap(np.angle(z))
    if n > 1 and np.max(np.abs(np.diff(theta))) > np.pi / 2:
        raise ResolutionError("phase increment per node too large", 4 * n)
    return x, theta


def phase_bounds_check(x, theta, b, c1, c_tau):
    """Measured range of |Theta'| against [|b| C1/2, 2|b|(C_tau + C1)]."""
    d = np.abs(np.gradient(theta, x))
    lo_bound, hi_bound = abs(b) * c1 / 2.0, 2.0 * abs(b) * (c_tau + c1)
    return {
        "min": float(d.min()),
        "max": float(d.max()),
        "lower_bound": lo_bound,
        "upper_bound": hi_bound,
        "holds": bool(d.min() >= lo_bound and d.max() <= hi_bound),
        "sign_constant": bool(np.all(np.sign(np.diff(theta)) == np.sign(theta[-1] - theta[0]))),
    }


@dataclass
class OscillationLayout:
    I: list
    J: list
    Jmid: list
    consts: KConstants
    b: float
    covered: float = 0.0

    def measured_ratios(self):
        """|I_m| |b| and |J_m| |b| for comparison with K1..K4."""
        b = abs(self.b)
        return [(hi - lo) * b for lo, hi in self.I], [(hi - lo) * b for lo, hi in self.J]

    def k_bounds_hold(self):
        i_r, j_r = self.measured_ratios()
        k = self.consts
        return all(k.K1 <= r <= k.K2 for r in i_r) and all(k.K3 <= r <= k.K4 for r in j_r)


def _arcs_in(lo, hi):
    """Arcs of phi with cos(phi) in [1/4, 1/2] lying inside [lo, hi]."""
    a_lo, a_hi = math.acos(COS_HI), math.acos(COS_LO)
    out = []
    for j in range(int(math.floor(lo / (2 * math.pi))) - 1, int(math.ceil(hi / (2 * math.pi))) + 1):
        base = 2 * math.pi * j
        for p, q in ((base + a_lo, base + a_hi), (base + 2 * math.pi - a_hi, base + 2 * math.pi - a_lo)):
            if p >= lo and q <= hi:
                out.append((p, q))
    return out


def oscillation_layout(x, theta, b, c1, c_tau):
    """Cut the overlap into full-oscillation intervals I_m and pick J_m inside each."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s = 1.0 if theta[-1] >= theta[0] else -1.0
    phi = s * theta
    if np.any(np.diff(phi) <= 0):
        raise ValidationError("phase difference is not strictly monotone on the overlap")
    R = phi[-1] - phi[0]
    if R < 2 * math.pi:
        raise BelowThresholdError(f"phase range {R:.3g} < 2 pi: |b| below the threshold")
    m = int(math.ceil(R / (3 * math.pi)))
    step = R / m
    if step < 2 * math.pi:
        m, step = 1, 3 * math.pi
    levels = phi[0] + step * np.arange(m + 1)
    xs = np.interp(levels, phi, x)
    I, J, Jmid = [], [], []
    for k in range(m):
        arcs = _arcs_in(levels[k], levels[k + 1])
        if not arcs:
            continue
        spans = [(np.interp(p, phi, x), np.interp(q, phi, x)) for p, q in arcs]
        p, q = max(spans, key=lambda t: t[1] - t[0])
        I.append((float(xs[k]), float(xs[k + 1])))
        J.append((float(p), float(q)))
        third = (q - p) / 3.0
        Jmid.append((float(p + third), float(q - third)))
    covered = sum(hi - lo for lo, hi in I) / (x[-1] - x[0])
    return OscillationLayout(I, J, Jmid, KConstants.from_bounds(c1, c_tau), float(b), covered)


# ---------------------------------------------------------------------------------------
# kappa
# ---------------------------------------------------------------------------------------


def _smooth(t):
    return t * t * (3.0 - 2.0 * t)


def _dsmooth(t):
    return 6.0 * t * (1.0 - t)


@dataclass(frozen=True)
class Kappa:
    """C^1 weight equal to 1 - kappa0 on each middle third J_m' and to 1 off every J_m."""

    J: tuple
    kappa0: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape)
        for p, q in self.J:
            r = (q - p) / 3.0
            t_up = np.clip((x - p) / r, 0.0, 1.0)
            t_dn = np.clip((q - x) / r, 0.0, 1.0)
            inside = (x > p) & (x < q)
            out = np.where(inside, 1.0 - self.kappa0 * np.minimum(_smooth(t_up), _smooth(t_dn)), out)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for p, q in self.J:
            r = (q - p) / 3.0
            up = (x > p) & (x < p + r)
            dn = (x > q - r) & (x < q)
            out = np.where(up, -self.kappa0 * _dsmooth((x - p) / r) / r, out)
            out = np.where(dn, self.kappa0 * _dsmooth((q - x) / r) / r, out)
        return out

    def max_derivative(self):
        """Closed form: 1.5 kappa0 / ramp length, maximized over the J_m."""
        if not self.J:
            return 0.0
        return max(1.5 * self.kappa0 / ((q - p) / 3.0) for p, q in self.J)


def build_kappa(layout, kappa0):
    if not 0.0 < kappa0 <= 0.5:
        raise ValidationError("kappa0 must lie in (0, 1/2]")
    return Kappa(tuple(layout.J) if layout is not None else (), float(kappa0))


# ---------------------------------------------------------------------------------------
# one cancellation
# ---------------------------------------------------------------------------------------


@dataclass
class ReductionReport:
    old_total: float
    new_total: float
    gamma: float
    alpha2_eff: float
    alpha2_bound: float
    b0: float
    equivalence_residual: float
    resample_residual: float
    cancellation_margin: float
    n_oscillations: int
    kappa0: float
    kappa_max_deriv: float
    kappa_bound: float
    bar_before: tuple
    bar_after: tuple
    new_regularity: dict = field(default_factory=dict)
    boundary_ratio: float = float("nan")
    k_bounds_hold: bool = True
    phase: dict = field(default_factory=dict)
    covered: float = 0.0
    family_gamma: float = float("nan")

    def to_json(self):
        out = dict(self.__dict__)
        out["bar_before"] = list(self.bar_before)
        out["bar_after"] = list(self.bar_after)
        return out


def _cut(pair, lo, hi):
    """Restriction of a pair to [lo, hi): (normalized pair, mass fraction)."""
    g = pair.density
    mass = g.mass_between(lo, hi)
    n = max(16, int(math.ceil(g.n * (hi - lo) / g.length)))
    piece = g.resample(lo, hi, n)
    q = piece.l1_mass()
    return StandardPair(piece.scaled(1.0 / q), pair.a, pair.b, pair.eps0, pair.alpha), mass


def _pair_from(values, lo, hi, a, b, eps0, alpha):
    g = GridDensity(lo, hi, values)
    mass = g.l1_mass()
    return StandardPair(g.scaled(1.0 / mass), a, b, eps0, alpha), mass


def _fine_nodes(layout, interval, base_n):
    if layout is None or not layout.J:
        return base_n
    ramp = min((q - p) / 3.0 for p, q in layout.J)
    n = int(math.ceil((interval[1] - interval[0]) / (ramp / 32.0)))
    n = max(n, base_n)
    if n > MAX_FINE_NODES:
        raise ResolutionError(f"cancellation grid needs {n} nodes", n)
    return n


def cancel_pairs(p1, w1, p2, w2, b, witness, c_tau, kappa0=None):
    """Four (or more) weighted pairs with the same density as w1 rho1 + w2 rho2, and a report.

    The old weight in the report is w1 + w2; the new one sums the replacement weights.
    """
    if w2 > w1:
        p1, w1, p2, w2 = p2, w2, p1, w1
    w1, w2 = float(w1), float(w2)
    lo = max(p1.interval[0], p2.interval[0])
    hi = min(p1.interval[1], p2.interval[1])
    s_lo, s_hi = max(witness.overlap[0], lo), min(witness.overlap[1], hi)
    if s_hi <= s_lo:
        raise CannotReduceError("the witness overlap misses one of the pairs")
    c1 = witness.separation
    b0 = b_threshold(c1, s_hi - s_lo)
    if abs(b) < b0:
        raise BelowThresholdError(f"|b| = {abs(b):g} below b0 = {b0:.4g}")
    a = max(p1.a, p2.a)
    c = 0.5 * math.exp(-a)

    # pieces of either pair outside the common interval stay as they are
    kept_pairs, kept_weights = [], []
    common = []
    for p, wp in ((p1, w1), (p2, w2)):
        if p.interval == (lo, hi):
            common.append((p, wp))
            continue
        for a_, b_ in ((p.interval[0], lo), (hi, p.interval[1])):
            if b_ - a_ > 1e-15:
                q, m = _cut(p, a_, b_)
                kept_pairs.append(q)
                kept_weights.append(wp * m)
        q, m = _cut(p, lo, hi)
        common.append((q, wp * m))
    (q1, v1), (q2, v2) = common

    # preliminary layout fixes the fine grid spacing
    x0, th0 = phase_difference(q1, q2, b, (s_lo, s_hi), c_tau=c_tau, c1=c1)
    layout0 = oscillation_layout(x0, th0, b, c1, c_tau)
    base_n = max(q1.density.n, q2.density.n)
    nf = _fine_nodes(layout0, (lo, hi), base_n)
    xf = lo + (np.arange(nf) + 0.5) * (hi - lo) / nf
    hf = (hi - lo) / nf

    r1, r2 = q1.density.interp(xf), q2.density.interp(xf)
    m1, m2 = np.sum(np.abs(r1)) * hf, np.sum(np.abs(r2)) * hf
    resample_residual = abs(v1 * (m1 - 1.0)) + abs(v2 * (m2 - 1.0))
    rho1, rho2 = r1 / m1, r2 / m2
    W1, W2 = v1 * m1, v2 * m2
    # after resampling the heavier pair may change; keep w2 <= w1
    if W2 > W1:
        rho1, rho2, W1, W2, q1, q2 = rho2, rho1, W2, W1, q2, q1
    for r in (rho1, rho2):
        if np.abs(r).min() <= c:
            raise SplitInfeasibleError(f"inf|rho| = {np.abs(r).min():.3g} <= c = {c:.3g}")
    u1, u2 = rho1 / np.abs(rho1), rho2 / np.abs(rho2)
    bar1, bar2 = c * u1, c * u2
    til1, til2 = (np.abs(rho1) - c) * u1, (np.abs(rho2) - c) * u2

    star = (xf >= s_lo) & (xf < s_hi)
    theta = np.unwrap(np.angle(rho1[star] * np.conj(rho2[star])))
    layout = oscillation_layout(xf[star], theta, b, c1, c_tau)
    if kappa0 is None:
        kappa0 = W2 / (2.0 * W1)
    kap = build_kappa(layout, kappa0)
    kv = kap(xf)
    bar1s = kv * bar1
    bar2s = bar2 + (1.0 - kv) * (W1 / W2) * bar1

    # eq. identity, node by node
    lhs = W1 * rho1 + W2 * rho2
    rhs = W1 * bar1s + W1 * til1 + W2 * bar2s + W2 * til2
    equivalence = float(np.sum(np.abs(lhs - rhs)) * hf)

    # the cancellation band on every J_m node
    margin = np.inf
    for p, q in layout.J:
        sel = (xf >= p) & (xf <= q)
        if not sel.any():
            continue
        val = np.abs(kappa0 * W1 * bar1[sel] + W2 * bar2[sel])
        lower = ALPHA1 * c * (kappa0 * W1 + W2)
        upper = c * (kappa0 * W1 + ALPHA2 * W2)
        margin = min(margin, float(np.min(val - lower)), float(np.min(upper - val)))
        if np.any(val < lower * (1 - NODE_RTOL)) or np.any(val > upper * (1 + NODE_RTOL)):
            raise CancellationViolation(f"cancellation band violated on J_m = [{p:.6g}, {q:.6g}]")

    nb1, mb1 = _pair_from(bar1s, lo, hi, a, b, p1.eps0, p1.alpha)
    nb2, mb2 = _pair_from(bar2s, lo, hi, a, b, p1.eps0, p1.alpha)
    nt1, mt1 = _pair_from(til1, lo, hi, 4 * a, b, p1.eps0, p1.alpha)
    nt2, mt2 = _pair_from(til2, lo, hi, 4 * a, b, p1.eps0, p1.alpha)
    bar_w1, bar_w2 = W1 * c * (hi - lo), W2 * c * (hi - lo)
    new = [(nb1, W1 * mb1), (nb2, W2 * mb2), (nt1, W1 * mt1), (nt2, W2 * mt2)]

    regularity = {}
    fixed = []
    for name, (p, wp) in zip(("bar1*", "bar2*", "tilde1", "tilde2"), new):
        H = log_modulus_holder(p.density, p.alpha)
        s = arg_slope(p.density)
        regularity[name] = {"H": H, "arg_slope": s}
        # each new pair carries a parameter large enough for its measured regularity
        own = max(p.a, H, s / abs(b)) * (1 + 1e-9)
        fixed.append((StandardPair(p.density, own, p.b, p.eps0, p.alpha), wp))
    regularity["a_abs_b"] = a * abs(b)
    regularity["within_a_abs_b"] = all(
        regularity[k]["H"] <= a * abs(b) and regularity[k]["arg_slope"] <= a * abs(b) for k in ("bar1*", "bar2*")
    )
    regularity["tilde_H_within_4a"] = all(regularity[k]["H"] <= 4 * a * (1 + 1e-9) for k in ("tilde1", "tilde2"))

    replacement = list(zip(kept_pairs, kept_weights)) + fixed
    old_total = w1 + w2
    new_total = float(sum(wp for _, wp in replacement))
    alpha2_eff = (new[0][1] + new[1][1] - bar_w1) / bar_w2
    K = layout.consts
    alpha2_bound = 1.0 - (1.0 - ALPHA2) * K.K3 / (3.0 * K.K2)
    return replacement, ReductionReport(
        old_total=old_total,
        new_total=new_total,
        gamma=-math.log(new_total / old_total),
        alpha2_eff=float(alpha2_eff),
        alpha2_bound=alpha2_bound,
        b0=b0,
        equivalence_residual=equivalence,
        resample_residual=float(resample_residual),
        cancellation_margin=float(margin),
        n_oscillations=len(layout.J),
        kappa0=float(kappa0),
        kappa_max_deriv=kap.max_derivative(),
        kappa_bound=K.C_kappa * kappa0 * abs(b),
        bar_before=(bar_w1, bar_w2),
        bar_after=(new[0][1], new[1][1]),
        new_regularity=regularity,
        k_bounds_hold=layout.k_bounds_hold(),
        phase=phase_bounds_check(xf[star], theta, b, c1, c_tau),
        covered=layout.covered,
    )


def _replace(family, drop, extra):
    """Family with the pairs at indices ``drop`` removed and ``extra`` appended."""
    drop = set(drop)
    keep = [k for k in range(len(family)) if k not in drop]
    recs = list(family.records) if family.records else [None] * len(family)
    pairs = [family.pairs[k] for k in keep] + [p for p, _ in extra]
    weights = [float(family.weights[k]) for k in keep] + [float(w) for _, w in extra]
    records = [recs[k] for k in keep] + [None] * len(extra)
    return StandardFamily(tuple(pairs), np.array(weights), family.boundary_bound, tuple(records),
                          family.dropped_weight)


def apply_cancellation(family, idx1, idx2, b, witness, c_tau, kappa0=None, boundary_eps=None):
    """Replace two overlapping pairs by the pairs (bar_1*, bar_2*, tilde_1, tilde_2).

    Parts of either pair outside the common interval are kept as separate pairs.
    """
    new, rep = cancel_pairs(family.pairs[idx1], family.weights[idx1], family.pairs[idx2],
                            family.weights[idx2], b, witness, c_tau, kappa0)
    out = _replace(family, (idx1, idx2), new)
    if boundary_eps is None:
        p = family.pairs[idx1]
        boundary_eps = 0.25 * p.length
    before = boundary_measure(family, boundary_eps)
    rep.boundary_ratio = boundary_measure(out, boundary_eps) / before if before > 0 else float("nan")
    rep.family_gamma = -math.log(out.total_weight / family.total_weight)
    return out, rep


# ---------------------------------------------------------------------------------------
# weight reduction over a family
# ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkingParameters:
    """Parameters (a, eps0, B) used by the reduction when no full bundle is feasible."""

    a: float
    eps0: float
    B: float
    lam: float
    D: float = 0.0


def tilde_n(b, a, lam, D=0.0):
    """Steps after which H <= a|b| contracts back to H <= a."""
    return int(math.ceil(math.log(abs(b) / (1.0 - D / a)) / lam))


def tilde_n_measured(H, a, lam, D=0.0):
    """Steps after which a measured H contracts below a (H e^{-lam n} + D <= a)."""
    if H + D <= a:
        return 0
    return int(math.ceil(math.log(H / (a - D)) / lam))


def n_b_schedule(n, b, a, lam, D=0.0):
    """Smallest multiple of n exceeding n + tilde_n."""
    target = n + tilde_n(b, a, lam, D)
    return n * (target // n + 1)


@dataclass
class StepReport:
    gamma1: float
    old_total: float
    new_total: float
    long_weight: float
    n_delta: int
    m: int
    tilde_n_b: int
    tilde_n_measured: int
    n_b: int
    reductions: list = field(default_factory=list)
    restoration: dict = field(default_factory=dict)

    def to_json(self):
        out = dict(self.__dict__)
        out["reductions"] = [r.to_json() for r in self.reductions]
        return out


def witness_grid(skew, delta, eps0, n_max=12):
    """Witnesses for J_l = [l delta, (l+1) delta), all at one common depth."""
    k = int(math.ceil(1.0 / delta - 1e-12))
    first = []
    for l in range(k):
        J = (l * delta, min(1.0, (l + 1) * delta))
        w = find_overlap_witness(skew, J, 0.5 * (J[1] - J[0]), eps0=max(eps0, J[1] - J[0]), n_max=n_max)
        if not w.found:
            raise CannotReduceError(f"no transversal pair inside {J}: cohomologous roof suspected")
        first.append(w)
    n_delta = max(w.n_delta for w in first)
    out = []
    for l, w in enumerate(first):
        if w.n_delta != n_delta:
            J = (l * delta, min(1.0, (l + 1) * delta))
            w = _witness_at_depth(skew, J, n_delta, eps0)
        out.append(w)
    return n_delta, out


def _witness_at_depth(skew, J, n, eps0):
    from .transversality import _best_pair, _build_witness, cone_eta

    eta = cone_eta(skew)
    bs = skew.branch_set(n)
    inside = np.nonzero((bs.rng_lo >= J[0] - 1e-14) & (bs.rng_hi <= J[1] + 1e-14))[0]
    if inside.size >= 2:
        best = _best_pair(skew, eta, bs, inside, float(bs.dom_lo[inside].min()), float(bs.dom_hi[inside].max()), 1024)
        if best is not None:
            wit = _build_witness(skew, eta, bs, n, best, eps0, 1024)
            if wit is not None:
                return wit
    raise CannotReduceError(f"no transversal pair inside {J} at depth {n}")


def _find_child(family, candidates, point):
    for k in candidates:
        lo, hi = family.pairs[k].interval
        if lo <= point < hi:
            return k
    return None


def weight_reduction_step(family, b, delta, skew, params, witnesses=None, resolution=2**12, m_max=16,
                          restore_samples=4):
    """Iterate, cancel one transversal couple per long pair, report the weight drop.

    The returned family lives at time m + n_delta.  Iterating it further preserves its
    total weight exactly, so the drop is already final; the ``restoration`` entry checks
    on sampled descendants that tilde_n more steps bring the modified pairs back to H <= a.
    """
    if params.B * delta >= 0.25:
        log.warning("B*delta = %.3g >= 1/4; long-pair weight is measured instead", params.B * delta)
    if witnesses is None:
        witnesses = witness_grid(skew, delta, params.eps0)
    n_delta, wits = witnesses
    b0 = min(b_threshold(w.separation, w.delta) for w in wits)
    if abs(b) < b0:
        raise BelowThresholdError(f"|b| = {abs(b):g} below b0 = {b0:.4g}")

    m = 0
    cur = family
    while _long_weight(cur, 3 * delta) < 0.75 * cur.total_weight:
        if m >= m_max:
            raise CannotReduceError("long pairs never carry 3/4 of the weight")
        cur = iterate_family(cur, 1, skew, b, resolution=resolution, validate=False)
        m += 1
    long_weight = _long_weight(cur, 3 * delta) / cur.total_weight
    parents = cur
    it = iterate_family(parents, n_delta, skew, b, resolution=resolution, validate=False)
    old_total = it.total_weight
    reductions = []
    fam = it
    index = {}
    for k, rec in enumerate(it.records):
        index.setdefault((rec.parent, rec.word), []).append(k)
    drop, extra = [], []
    for j, pair in enumerate(parents.pairs):
        lo, hi = pair.interval
        # only long pairs of the working class take part
        if hi - lo <= 3 * delta or pair.a > params.a * (1 + 1e-9):
            continue
        l0 = int(math.ceil(lo / delta - 1e-12))
        if (l0 + 1) * delta > hi + 1e-12:
            continue
        wit = wits[l0]
        mid = 0.5 * (wit.overlap[0] + wit.overlap[1])
        w1, w2 = wit.pairs[0]
        k1 = _find_child(it, index.get((j, w1), ()), mid)
        k2 = _find_child(it, index.get((j, w2), ()), mid)
        if k1 is None or k2 is None:
            continue
        new, rep = cancel_pairs(it.pairs[k1], it.weights[k1], it.pairs[k2], it.weights[k2], b, wit, skew.c_tau)
        drop += [k1, k2]
        extra += new
        reductions.append(rep)
    if not reductions:
        raise CannotReduceError("no transversal couple found among the long pairs")
    fam = _replace(it, drop, extra)
    new_total = fam.total_weight
    a = params.a
    worst_H = max(max(r.new_regularity["bar1*"]["H"], r.new_regularity["bar2*"]["H"]) for r in reductions)
    tn = tilde_n(b, a, params.lam, params.D)
    tn_meas = max(tn, tilde_n_measured(worst_H, a, params.lam, params.D))
    restoration = _restoration_check(fam, skew, b, tn_meas, a, restore_samples, resolution)
    return fam, StepReport(
        gamma1=-math.log(new_total / old_total),
        old_total=old_total,
        new_total=new_total,
        long_weight=long_weight,
        n_delta=n_delta,
        m=m,
        tilde_n_b=tn,
        tilde_n_measured=tn_meas,
        n_b=m + n_delta + tn_meas,
        reductions=reductions,
        restoration=restoration,
    )


def _long_weight(family, length):
    return float(sum(w for p, w in zip(family.pairs, family.weights) if p.length > length))


def _restoration_check(family, skew, b, steps, a, samples, resolution):
    """Iterate a few modified pairs ``steps`` times; report the largest child H.

    Children covering the kappa ramps are the worst case, so the descendants are
    ranked by their share of the parent's mass around the most irregular node.
    """
    modified = [k for k, rec in enumerate(family.records) if rec is None]
    if not modified or steps == 0:
        return {"steps": steps, "checked": 0, "max_H": 0.0, "restored": True}
    order = sorted(modified, key=lambda k: -family.pairs[k].a)[:samples]
    worst = 0.0
    checked = 0
    for k in order:
        p = family.pairs[k]
        # grid policy follows the measured phase slope, not the inflated own parameter
        p = StandardPair(p.density, max(a, arg_slope(p.density) / abs(b)), p.b, p.eps0, p.alpha)
        logm = np.log(p.density.modulus)
        grad = np.abs(np.diff(logm))
        x_bad = p.density.nodes[int(np.argmax(grad))]
        # follow only the branch through the worst point
        cur = StandardFamily((p,), np.array([1.0]))
        xb = x_bad
        for _ in range(steps):
            nxt = iterate_family(cur, 1, skew, b, resolution=resolution, validate=False)
            fx = float(skew.joint(xb))
            sel = [i for i, q in enumerate(nxt.pairs) if q.interval[0] <= fx < q.interval[1]]
            if not sel:
                break
            i = sel[0]
            cur = StandardFamily((nxt.pairs[i],), np.array([1.0]))
            xb = fx
        g = cur.pairs[0].density
        worst = max(worst, log_modulus_holder(g, cur.pairs[0].alpha))
        checked += 1
    return {"steps": steps, "checked": checked, "max_H": worst, "restored": bool(worst <= a)}


# ---------------------------------------------------------------------------------------
# decay loop and the Hölder decomposition
# ---------------------------------------------------------------------------------------


@dataclass
class DecayLoopReport:
    times: list
    family_weights: list
    direct_norms: list
    gammas: list
    consistent: bool

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,time,total_weight,gamma_running,direct_norm\n")
            for k, (t, w, g, d) in enumerate(zip(self.times, self.family_weights, self.gammas, self.direct_norms)):
                fh.write(f"{k},{t},{w!r},{g!r},{d!r}\n")


def decay_loop(g0, b, k_steps, skew, params, delta, resolution=2**12, check_resolution=None, max_pairs=20000):
    """Alternate weight reduction and renormalization; compare with the direct operator.

    Each round runs the reduction step on the current family.  The family is not
    iterated through the restoration stretch (weights are invariant there), which keeps
    the number of pairs within ``max_pairs``.
    """
    fam = g0 if isinstance(g0, StandardFamily) else family_from_density(
        g0, params.eps0, params.a, b, resolution=resolution, B=params.B)
    witnesses = witness_grid(skew, delta, params.eps0)
    b0 = min(b_threshold(w.separation, w.delta) for w in witnesses[1])
    if abs(b) < b0:
        raise BelowThresholdError(f"|b| = {abs(b):g} below b0 = {b0:.4g}")
    start = fam.total_weight
    times, weights, gammas, norms = [0], [start], [0.0], []
    dens0 = family_density(fam, check_resolution or resolution)
    t = 0
    for _ in range(k_steps):
        if len(fam) * 2 ** witnesses[0] > max_pairs:
            raise ResolutionError(f"family would exceed {max_pairs} pairs", max_pairs)
        fam, rep = weight_reduction_step(fam, b, delta, skew, params, witnesses=witnesses,
                                         resolution=resolution, restore_samples=0)
        t += rep.m + rep.n_delta
        times.append(t)
        weights.append(fam.total_weight)
        gammas.append(-math.log(fam.total_weight / start) / len(gammas))
    n_check = check_resolution or resolution
    for t in times:
        if t == 0:
            norms.append(dens0.l1_mass())
        else:
            norms.append(apply_transfer(skew, TransferConfig(n_check, b, t), dens0).l1_mass())
    consistent = all(d <= wt * (1 + 1e-6) + 1e-9 for d, wt in zip(norms, weights))
    return DecayLoopReport(times, weights, norms, gammas, consistent)


@dataclass
class HolderSplit:
    shift: float
    fluctuation: StandardFamily
    constant: StandardFamily
    holder: float
    reconstruction_error: float
    weight_bound: float


def _chop_on_grid(vals, eps0, a, b, alpha):
    """Cut circle samples at cell boundaries into pieces shorter than eps0."""
    n = vals.size
    m = int(math.floor(1.0 / eps0)) + 1 if eps0 < 1 else 2
    while math.ceil(n / m) / n >= eps0:
        m += 1
    edges = np.round(np.arange(m + 1) * n / m).astype(int)
    pairs, weights = [], []
    dropped = 0.0
    for i0, i1 in zip(edges[:-1], edges[1:]):
        piece = GridDensity(i0 / n, i1 / n, vals[i0:i1])
        mass = piece.l1_mass()
        if mass < 1e-14:
            dropped += mass
            continue
        pairs.append(StandardPair(piece.scaled(1.0 / mass), a, b, eps0, alpha))
        weights.append(mass)
    return StandardFamily(tuple(pairs), np.array(weights), dropped_weight=dropped)


def holder_to_families(g, a, eps0, b=0.0, alpha=1.0, resolution=2**12):
    """Write g = (g - c) + c with c = 1 + |g|_alpha / a + sup|g| and chop both parts."""
    x = (np.arange(resolution) + 0.5) / resolution
    vals = np.asarray(g(x), dtype=complex) * np.ones(resolution) if callable(g) else g.values
    if not callable(g):
        resolution = g.n
        x = g.nodes
    hol = holder_estimate(vals, 1.0 / resolution, alpha)
    sup = float(np.max(np.abs(vals)))
    c = 1.0 + hol / a + sup
    fluct = _chop_on_grid(vals - c, eps0, a, b, alpha)
    const = _chop_on_grid(np.full(resolution, c, dtype=complex), eps0, a, b, alpha)
    recon = family_density(fluct, resolution).values + family_density(const, resolution).values
    err = float(np.sum(np.abs(recon - vals)) / resolution)
    return HolderSplit(c, fluct, const, hol, err, 2.0 + 2.0 * hol / a + 3.0 * sup)
