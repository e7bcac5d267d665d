"""Standard pairs, standard families and their iteration under the twisted operator."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .density import MIN_NODES, GridDensity, arg_slope, log_modulus_holder, required_nodes
from .errors import BranchOverflowError, InfeasibleParametersError, ValidationError
from .maps import BRANCH_CAP, SkewProduct, _owner

log = logging.getLogger(__name__)

DROP_MASS = 1e-14
MASS_TOL = 1e-10
DEFAULT_RESOLUTION = 2**12


@dataclass(frozen=True, eq=False)
class StandardPair:
    """Density on a short interval with H(rho) <= a and |arg(rho)'| <= a|b|."""

    density: GridDensity
    a: float
    b: float
    eps0: float
    alpha: float = 1.0

    @property
    def interval(self):
        return (self.density.lo, self.density.hi)

    @property
    def length(self):
        return self.density.length

    def measure(self):
        g = self.density
        return {
            "mass": g.l1_mass(),
            "H": log_modulus_holder(g, self.alpha),
            "arg_slope": arg_slope(g),
        }

    def validate(self, rtol=1e-6):
        if self.length > self.eps0 * (1 + 1e-12):
            raise ValidationError(f"interval length {self.length:.6g} exceeds eps0={self.eps0:.6g}")
        m = self.measure()
        if abs(m["mass"] - 1.0) > MASS_TOL:
            raise ValidationError(f"pair mass {m['mass']!r} != 1")
        if m["H"] > self.a * (1 + rtol) + 1e-9:
            raise ValidationError(f"H(rho)={m['H']:.6g} exceeds a={self.a:.6g}")
        if m["arg_slope"] > self.a * abs(self.b) * (1 + rtol) + 1e-9:
            raise ValidationError(f"arg slope {m['arg_slope']:.6g} exceeds a|b|={self.a * abs(self.b):.6g}")
        return m


def make_pair(func, lo, hi, a, b, eps0, n=None, alpha=1.0, resolution=DEFAULT_RESOLUTION):
    """Sample func on [lo, hi) and normalize to unit L1 mass."""
    if n is None:
        n = max(MIN_NODES, int(math.ceil((hi - lo) * resolution)), required_nodes(a * b, hi - lo))
    g = GridDensity.from_function(func, lo, hi, n).normalized()
    return StandardPair(g, float(a), float(b), float(eps0), alpha)


@dataclass(frozen=True)
class IterationRecord:
    parent: int
    word: tuple
    chop: int
    z: float


@dataclass(frozen=True, eq=False)
class StandardFamily:
    pairs: tuple
    weights: np.ndarray
    boundary_bound: float = float("inf")
    records: tuple = ()
    dropped_weight: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if w.shape != (len(self.pairs),):
            raise ValidationError("one weight per pair required")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")

    @property
    def total_weight(self):
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.pairs)

    def to_json(self, directory):
        """Write intervals and weights to family.json, each density to its own CSV."""
        os.makedirs(directory, exist_ok=True)
        entries = []
        for k, (p, w) in enumerate(zip(self.pairs, self.weights)):
            name = f"pair_{k:05d}.csv"
            p.density.to_csv(os.path.join(directory, name))
            entries.append({"interval": list(p.interval), "weight": float(w), "a": p.a, "density": name})
        doc = {
            "b": self.pairs[0].b if self.pairs else 0.0,
            "eps0": self.pairs[0].eps0 if self.pairs else None,
            "B": self.boundary_bound,
            "total_weight": self.total_weight,
            "pairs": entries,
        }
        with open(os.path.join(directory, "family.json"), "w") as fh:
            json.dump(doc, fh, indent=1)
        return doc


def single_pair_family(pair, weight=1.0, B=float("inf")):
    return StandardFamily((pair,), np.array([weight]), B)


def chop_count(length, eps0):
    """Number of equal pieces putting every piece length in [eps0/3, eps0)."""
    if length < eps0:
        return 1
    return int(math.floor(length / eps0)) + 1


def family_from_density(g, eps0, a, b, alpha=1.0, resolution=DEFAULT_RESOLUTION, B=float("inf")):
    """Cut a circle density into equal pieces shorter than eps0 and normalize each."""
    m = int(math.floor(1.0 / eps0)) + 1 if eps0 < 1 else 2
    pairs, weights = [], []
    dropped = 0.0
    for k in range(m):
        lo, hi = k / m, (k + 1) / m
        n = max(MIN_NODES, int(math.ceil((hi - lo) * resolution)), required_nodes(a * b, hi - lo))
        nodes = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        vals = g(nodes) if callable(g) else g.interp(nodes)
        piece = GridDensity(lo, hi, np.asarray(vals, dtype=complex) * np.ones(n))
        mass = piece.l1_mass()
        if mass < DROP_MASS:
            dropped += mass
            continue
        pairs.append(StandardPair(piece.scaled(1.0 / mass), a, b, eps0, alpha))
        weights.append(mass)
    return StandardFamily(tuple(pairs), np.array(weights), B, dropped_weight=dropped)


def family_density(family, resolution=DEFAULT_RESOLUTION):
    """sum_j w_j rho_j, zero-extended to the circle and sampled at N cell midpoints."""
    x = (np.arange(resolution) + 0.5) / resolution
    out = np.zeros(resolution, dtype=complex)
    for p, w in zip(family.pairs, family.weights):
        lo, hi = p.interval
        i0 = int(np.searchsorted(x, lo, side="left"))
        i1 = int(np.searchsorted(x, hi, side="left"))
        if i1 > i0:
            out[i0:i1] += w * p.density.interp(x[i0:i1])
    return GridDensity(0.0, 1.0, out)


def boundary_measure(family, eps):
    """sum_j w_j * (mass of rho_j within eps of an endpoint of I_j)."""
    total = 0.0
    for p, w in zip(family.pairs, family.weights):
        g = p.density
        if 2 * eps >= g.length:
            part = g.l1_mass()
        else:
            part = g.mass_between(g.lo, g.lo + eps) + g.mass_between(g.hi - eps, g.hi)
        total += w * part
    return float(total)


# ---------------------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------------------


def _forward_along(owner, word, x):
    """f^n(x) for x in O_h, applying the branches w1, ..., wn in turn."""
    z = np.asarray(x, dtype=float)
    for s in word:
        z = owner.branches[s].forward(z)
    return z


def child_bounds(pair, n, lam, alpha, distortion, c_tau):
    """Propagated bounds on H and |arg'| after n steps."""
    h_bound = pair.a * math.exp(-lam * alpha * n) + distortion
    arg_bound = abs(pair.b) * (pair.a * math.exp(-lam * n) + c_tau)
    return h_bound, arg_bound


def iterate_family(family, n, skew, b=None, resolution=DEFAULT_RESOLUTION, validate=True, rtol=1e-6):
    """The family G_n whose density is L_b^n of the density of G."""
    owner = _owner(skew)
    bs = owner.branch_set(n)
    c_tau = skew.c_tau if isinstance(skew, SkewProduct) else 0.0
    lam, alpha, dist = owner.lam, owner.alpha, owner.distortion
    pairs, weights, records = [], [], []
    dropped = family.dropped_weight
    worst = None
    for j, (pair, w) in enumerate(zip(family.pairs, family.weights)):
        bb = pair.b if b is None else b
        rho = pair.density
        p_lo, p_hi = pair.interval
        hit = np.nonzero((bs.rng_hi > p_lo) & (bs.rng_lo < p_hi))[0]
        h_bound, arg_bound = child_bounds(replace(pair, b=bb), n, lam, alpha, dist, c_tau)
        a_child = max(pair.a, h_bound, arg_bound / abs(bb) if bb else 0.0)
        step = rho.spacing
        for i in hit:
            word = tuple(int(s) for s in bs.words[i])
            x0, x1 = max(p_lo, bs.rng_lo[i]), min(p_hi, bs.rng_hi[i])
            if x1 - x0 <= 1e-15:
                continue
            ends = _forward_along(owner, word, np.array([x0, x1]))
            # reuse exact branch-domain endpoints where the cut is at the cylinder edge
            increasing = ends[1] > ends[0]
            if x0 == bs.rng_lo[i]:
                ends[0] = bs.dom_lo[i] if increasing else bs.dom_hi[i]
            if x1 == bs.rng_hi[i]:
                ends[1] = bs.dom_hi[i] if increasing else bs.dom_lo[i]
            u_lo, u_hi = float(min(ends)), float(max(ends))
            pieces = chop_count(u_hi - u_lo, pair.eps0)
            edges = np.linspace(u_lo, u_hi, pieces + 1)
            for ell in range(pieces):
                a_, b_ = edges[ell], edges[ell + 1]
                sup_jac = abs(float(skew.pullback(np.array([word] * 2), np.array([a_, b_]))[1].max()))
                per_len = max(resolution, sup_jac / step)
                m = max(MIN_NODES, int(math.ceil((b_ - a_) * per_len)),
                        required_nodes(a_child * bb, b_ - a_))
                u = a_ + (np.arange(m) + 0.5) * (b_ - a_) / m
                rows = np.broadcast_to(np.asarray(word, dtype=np.int64), (m, len(word)))
                x, d, tsum, _ = skew.pullback(rows, u)
                vals = rho.interp(x) * np.abs(d)
                if bb != 0.0:
                    vals = vals * np.exp(1j * bb * tsum)
                ha, hb = _pull_endpoints(skew, word, a_, b_)
                z = abs(rho.mass_between(min(ha, hb), max(ha, hb)))
                child = GridDensity(float(a_), float(b_), vals)
                qmass = child.l1_mass()
                if z * w < DROP_MASS or qmass <= 0.0:
                    dropped += z * w
                    log.info("dropped child of pair %d (word %s, chop %d) with mass %.3g", j, word, ell, z * w)
                    continue
                child = child.scaled(1.0 / qmass)
                cp = StandardPair(child, a_child, bb, pair.eps0, pair.alpha)
                if validate:
                    worst = _check_child(cp, h_bound, arg_bound, rtol, (j, word, ell), worst)
                pairs.append(cp)
                weights.append(z * w)
                records.append(IterationRecord(j, word, ell, z))
    if worst is not None and worst[0] > 0:
        excess, where, what = worst
        raise ValidationError(f"child {where} violates {what} by {excess:.3g}")
    return StandardFamily(tuple(pairs), np.array(weights), family.boundary_bound, tuple(records), dropped)


def _pull_endpoints(skew, word, a_, b_):
    x = skew.pullback(np.array([word] * 2, dtype=np.int64), np.array([a_, b_]))[0]
    return float(x[0]), float(x[1])


def _check_child(pair, h_bound, arg_bound, rtol, where, worst):
    g = pair.density
    checks = []
    if np.all(g.modulus > 0):
        checks.append(("H bound", log_modulus_holder(g, pair.alpha) - (h_bound * (1 + rtol) + 1e-9)))
    checks.append(("arg bound", arg_slope(g) - (arg_bound * (1 + rtol) + 1e-9)))
    checks.append(("length", g.length - pair.eps0 * (1 + 1e-12)))
    for what, excess in checks:
        if worst is None or excess > worst[0]:
            worst = (excess, where, what)
    return worst


# ---------------------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterBundle:
    a: float
    n: int
    sigma: float
    eps0: float
    B: float
    beta: float
    c_bar: float
    lam: float
    alpha: float
    D: float
    c_tau: float
    tail_weight: float = 0.0

    @property
    def C_a(self):
        return growth_constant(self.a, self.D)

    @property
    def finite(self):
        return math.isinf(self.sigma)

    def inequalities(self):
        """The five standing inequalities with their left-hand sides."""
        es = 0.0 if self.finite else math.exp(-self.sigma)
        lhs3 = math.exp(4 * self.a + 2 * self.D) * (2**self.n * math.exp(-self.lam * self.n) + es)
        return {
            "modulus": math.exp(-self.lam * self.alpha * self.n) + self.D / self.a,
            "argument": math.exp(-self.lam * self.n) + self.c_tau / self.a,
            "growth": lhs3,
            "tail": self.tail_weight if not self.finite else 0.0,
        }

    def feasible(self):
        q = self.inequalities()
        es = 0.0 if self.finite else math.exp(-self.sigma)
        return q["modulus"] < 1 and q["argument"] < 1 and q["growth"] < 1 and q["tail"] <= es and self.eps0 > 0

    def growth_bound(self, family, eps, n=None):
        """Right side of the one-step growth inequality at scale eps."""
        n = self.n if n is None else n
        es = 0.0 if self.finite else math.exp(-self.sigma)
        ca = self.C_a
        shrunk = boundary_measure(family, math.exp(-self.lam * n) * eps)
        return ca * (2**n + es * math.exp(self.lam * n)) * shrunk + 6 * ca / self.eps0 * eps * family.total_weight

    def to_json(self):
        return {
            "a": self.a, "n": self.n, "sigma": "inf" if self.finite else self.sigma,
            "eps0": self.eps0, "B": self.B, "beta": self.beta, "C_bar": self.c_bar,
            "inequalities": self.inequalities(), "feasible": self.feasible(),
        }


def growth_constant(a, D):
    """Comparability constant used in the growth inequality."""
    return max(math.exp(4 * a + 2 * D), 2 * math.exp(a))


def _eps0_from_cylinders(owner, n):
    """Shortest union of 2^n - 1 circularly consecutive depth-n cylinders (capped at 1)."""
    k = 2**n - 1
    try:
        bs = owner.branch_set(n, cap=BRANCH_CAP)
        lengths = bs.rng_hi - bs.rng_lo
        m = len(lengths)
        if k >= m:
            return 1.0
        ext = np.concatenate([[0.0], np.cumsum(np.concatenate([lengths, lengths]))])
        runs = ext[k : k + m] - ext[:m]
        return float(min(1.0, runs.min()))
    except BranchOverflowError:
        pass
    full = all(br.image == (0.0, 1.0) for br in owner.branches)
    if not full:
        raise InfeasibleParametersError(f"too many depth-{n} branches to certify eps0")
    max_slope = max(float(np.max(np.abs(br.lift.deriv(np.linspace(br.lo, br.hi, 4097))))) for br in owner.branches)
    return float(min(1.0, k * max_slope ** (-n)))


def solve_parameters(skew, roof=None, n_max=64, margin=1.01, a_min=0.0):
    """Smallest n (then smallest a) meeting the standing inequalities."""
    if roof is not None:
        skew = SkewProduct.build(skew, roof)
    owner = _owner(skew)
    lam, alpha, D = owner.lam, owner.alpha, owner.distortion
    c_tau = skew.c_tau if isinstance(skew, SkewProduct) else 0.0
    if lam <= math.log(2) + 1e-12:
        raise InfeasibleParametersError(
            f"expansion exponent {lam:.6g} <= ln 2: 2^n e^(-lam n) never drops below 1"
        )
    for n in range(1, n_max + 1):
        a = max(
            a_min,
            D / (1 - math.exp(-lam * alpha * n)) * margin,
            c_tau / (1 - math.exp(-lam * n)) * margin,
            1e-9,
        )
        q = math.exp(4 * a + 2 * D) * 2**n * math.exp(-lam * n)
        if q >= 1:
            continue
        eps0 = _eps0_from_cylinders(owner, n)
        ca = growth_constant(a, D)
        beta = math.log(ca * 2**n) / n
        if beta >= lam:
            continue
        c_bar = 6 * ca / eps0 * (1 / (1 - math.exp(beta - lam)) + 1)
        return ParameterBundle(a, n, math.inf, eps0, 2 * c_bar, beta, c_bar, lam, alpha, D, c_tau)
    raise InfeasibleParametersError(f"no feasible (a, n) with n <= {n_max}")


# ---------------------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------------------


@dataclass
class InvarianceReport:
    passed: bool
    weight_before: float
    weight_after: float
    weight_error: float
    children: int
    mass_error: float
    mod_margin: float
    arg_margin: float
    growth: list = field(default_factory=list)
    family: object = field(default=None, repr=False)

    def to_json(self):
        return {
            "passed": self.passed,
            "weight_before": self.weight_before,
            "weight_after": self.weight_after,
            "weight_error": self.weight_error,
            "children": self.children,
            "mass_error": self.mass_error,
            "mod_margin": self.mod_margin,
            "arg_margin": self.arg_margin,
            "growth": self.growth,
        }


def verify_invariance(family, n, skew, b, bundle, eps_samples=10, resolution=DEFAULT_RESOLUTION):
    """Iterate once and check normalization, regularity bounds, weight and boundary growth."""
    owner = _owner(skew)
    it = iterate_family(family, n, skew, b, resolution=resolution, validate=False)
    mass_err, mod_margin, arg_margin = 0.0, np.inf, np.inf
    parents = family.pairs
    for rec, child in zip(it.records, it.pairs):
        par = replace(parents[rec.parent], b=b)
        hb = par.a * (math.exp(-owner.lam * owner.alpha * n) + owner.distortion / par.a)
        ab = par.a * abs(b) * (math.exp(-owner.lam * n) + skew.c_tau / par.a)
        m = child.measure()
        mass_err = max(mass_err, abs(m["mass"] - 1.0))
        mod_margin = min(mod_margin, hb - m["H"])
        arg_margin = min(arg_margin, ab - m["arg_slope"])
    before = family.total_weight
    after = it.total_weight + it.dropped_weight - family.dropped_weight
    growth = []
    for eps in bundle.eps0 * (np.arange(1, eps_samples + 1) / (eps_samples + 1)):
        lhs = boundary_measure(it, eps)
        rhs = bundle.growth_bound(family, eps, n)
        growth.append({"eps": float(eps), "lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs)})
    tol = 1e-9
    passed = (
        abs(after - before) <= 1e-10
        and mass_err <= MASS_TOL
        and mod_margin >= -tol
        and arg_margin >= -tol * max(1.0, abs(b))
        and all(g["ok"] for g in growth)
    )
    return InvarianceReport(passed, before, after, abs(after - before), len(it), mass_err,
                            float(mod_margin), float(arg_margin), growth, it)


def iterated_growth_check(family, bundle, skew, b, k=3, eps_samples=5, resolution=DEFAULT_RESOLUTION):
    """Check |d_eps G_{kn}| against the k-fold composition of the one-step inequality."""
    ca = bundle.C_a
    lam, n = bundle.lam, bundle.n
    K = ca * 2**n
    rows = []
    cur = family
    for step in range(1, k + 1):
        cur = iterate_family(cur, n, skew, b, resolution=resolution, validate=False)
        m = step * n
        for eps in bundle.eps0 * (np.arange(1, eps_samples + 1) / (eps_samples + 1)):
            # unrolled chain: K^k |d_{e^{-lam m} eps} G| + sum_i K^i * 6 C_a eps0^-1 e^{-lam n i} eps |G|
            tail = sum(K**i * math.exp(-lam * n * i) for i in range(step))
            rhs = K**step * boundary_measure(family, math.exp(-lam * m) * eps) + 6 * ca / bundle.eps0 * eps * tail * family.total_weight
            lhs = boundary_measure(cur, eps)
            rows.append({"m": m, "eps": float(eps), "lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs)})
    return rows
