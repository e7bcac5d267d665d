"""Slope cones of the skew product's derivative cocycle and transversality witnesses.

``DF(u, v) = (f' u, tau' u + v)`` sends a slope ``s = v/u`` to ``(tau' + s)/f'``.
Pushing a slope along an inverse branch h of f^n from ``h(x)`` to ``x`` gives
``(tau_n o h)'(x) + s h'(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BranchOverflowError, DomainError, ValidationError
from .families import chop_count
from .maps import SAMPLES_PER_BRANCH, InverseBranch

GRID = 2**10
REFINE = 10


@dataclass(frozen=True)
class Cone:
    """Slopes v/u in [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError("cone slope interval reversed")

    @classmethod
    def symmetric(cls, eta):
        return cls(-eta, eta)

    def contains(self, other, tol=1e-12):
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def gap(self, other):
        """Distance between the two slope intervals (0 if they meet)."""
        return max(0.0, other.lo - self.hi, self.lo - other.hi)

    def disjoint(self, other):
        return self.gap(other) > 0.0


def _inv_slope_sup(owner):
    worst = 0.0
    for br in owner.branches:
        x = np.linspace(br.lo, br.hi, SAMPLES_PER_BRANCH + 1)
        worst = max(worst, float(np.max(1.0 / np.abs(br.lift.deriv(x)))))
    return worst


def cone_eta(skew):
    """eta = ||tau'/f'|| / (1 - ||1/f'||), the aperture of an invariant cone."""
    owner = skew.joint
    inv = _inv_slope_sup(owner)
    if inv >= 1.0:
        raise DomainError("||1/f'|| >= 1: map is not expanding")
    if skew.roof.deriv_sup is not None:
        num = skew.roof.deriv_sup * inv
    else:
        num = 0.0
        for br, ri in zip(owner.branches, skew.roof_index):
            x = np.linspace(br.lo, br.hi, SAMPLES_PER_BRANCH + 1)
            num = max(num, float(np.max(np.abs(skew.roof.pieces[ri].deriv(x) / br.lift.deriv(x)))))
    return num / (1.0 - inv)


def _slopes(skew, word, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rows = np.broadcast_to(np.asarray(word, dtype=np.int64), (x.size, len(word)))
    _, d, _, t = skew.pullback(rows, x)
    return t, d


def push_cone(skew, h, cone, x):
    """Image of a slope cone under DF^n at h(x), i.e. slopes at x."""
    h.check_domain(x)
    t, d = _slopes(skew, h.word, x)
    a, b = t + cone.lo * d, t + cone.hi * d
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    if np.ndim(x) == 0:
        return Cone(float(lo[0]), float(hi[0]))
    return [Cone(float(p), float(q)) for p, q in zip(lo, hi)]


def uni_separation(skew, n, h1, h2, x):
    """|(tau_n o h1)'(x) - (tau_n o h2)'(x)|."""
    if h1.depth != n or h2.depth != n:
        raise ValidationError("branch depth does not match n")
    h1.check_domain(x)
    h2.check_domain(x)
    t1, _ = _slopes(skew, h1.word, x)
    t2, _ = _slopes(skew, h2.word, x)
    sep = np.abs(t1 - t2)
    return float(sep[0]) if np.ndim(x) == 0 else sep


def max_pair_separation(skew, n, x):
    """max over branch pairs of the separation at each x (all branches containing x)."""
    bs = skew.branch_set(n)
    t, _ = _slope_table(skew, bs, np.arange(len(bs)), np.asarray(x, dtype=float))
    with np.errstate(invalid="ignore"):
        out = np.nanmax(t, axis=0) - np.nanmin(t, axis=0)
    return np.nan_to_num(out)


# ---------------------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------------------


@dataclass
class TransversalityWitness:
    found: bool
    n_delta: int = 0
    pairs: list = field(default_factory=list)
    overlap: tuple = ()
    separation: float = 0.0
    delta: float = 0.0
    least_domain: float = 0.0
    per_interval: list = field(default_factory=list)
    verdict: str = "transversal"

    def to_json(self):
        return {
            "verdict": self.verdict,
            "found": self.found,
            "n_delta": self.n_delta,
            "pairs": [[list(w1), list(w2)] for w1, w2 in self.pairs],
            "I_star": list(self.overlap),
            "C1": self.separation,
            "Delta": self.delta,
            "M": self.least_domain,
            "per_interval": self.per_interval,
        }


def _chop_edges(lo, hi, eps0):
    return np.linspace(lo, hi, chop_count(hi - lo, eps0) + 1)


def _component(mask, k):
    """Index range [i, j) of the run of True in mask that contains k."""
    i = k
    while i > 0 and mask[i - 1]:
        i -= 1
    j = k + 1
    while j < mask.size and mask[j]:
        j += 1
    return i, j


def _slope_table(skew, bs, idx, x, chunk=256):
    """Slopes t and |h'| of the listed branches on grid x (nan outside a domain)."""
    t = np.full((len(idx), x.size), np.nan)
    d = np.full((len(idx), x.size), np.nan)
    for c0 in range(0, len(idx), chunk):
        sub = idx[c0 : c0 + chunk]
        inside = (x[None, :] >= bs.dom_lo[sub, None]) & (x[None, :] < bs.dom_hi[sub, None])
        r, c = np.nonzero(inside)
        if r.size == 0:
            continue
        _, dd, _, tt = skew.pullback(bs.words[sub[r]], x[c])
        t[c0 + r, c] = tt
        d[c0 + r, c] = np.abs(dd)
    return t, d


def _best_pair(skew, eta, bs, inside, lo, hi, grid):
    """At each grid point take the steepest and shallowest branch; keep the best
    point whose two pushed cones are disjoint."""
    x = lo + (np.arange(grid) + 0.5) * (hi - lo) / grid
    t, d = _slope_table(skew, bs, inside, x)
    finite = np.isfinite(t)
    present = finite.sum(axis=0) >= 2
    if not present.any():
        return None
    kmax = np.argmax(np.where(finite, t, -np.inf), axis=0)
    kmin = np.argmin(np.where(finite, t, np.inf), axis=0)
    cols = np.arange(grid)
    sep = t[kmax, cols] - t[kmin, cols]
    disjoint = present & (sep > eta * (d[kmax, cols] + d[kmin, cols]) + 1e-12)
    if not disjoint.any():
        return None
    k = int(np.argmax(np.where(disjoint, sep, -np.inf)))
    k1, k2 = int(inside[kmax[k]]), int(inside[kmin[k]])
    return _pair_candidate(skew, eta, bs, k1, k2, grid), k1, k2


def _pair_candidate(skew, eta, bs, k1, k2, grid):
    """Separation profile of two branches over the overlap of their domains."""
    lo = max(bs.dom_lo[k1], bs.dom_lo[k2])
    hi = min(bs.dom_hi[k1], bs.dom_hi[k2])
    x = lo + (np.arange(grid) + 0.5) * (hi - lo) / grid
    t1, d1 = _slopes(skew, bs.words[k1], x)
    t2, d2 = _slopes(skew, bs.words[k2], x)
    sep = np.abs(t1 - t2)
    disjoint = sep > eta * (np.abs(d1) + np.abs(d2)) + 1e-12
    score = np.where(disjoint, sep, 0.0)
    k = int(np.argmax(score))
    return score[k], x, sep, disjoint, k, (lo, hi)


def find_overlap_witness(skew, interval, delta, eps0=1.0, n_max=12, grid=GRID, branch_cap=2**16):
    """Search depths 1..n_max for two branches inside ``interval`` that are transversal
    on a common stretch of their images."""
    I_lo, I_hi = interval
    if not delta < I_hi - I_lo <= eps0 + 1e-12:
        raise ValidationError("need delta < |I| <= eps0")
    eta = cone_eta(skew)
    for n in range(1, n_max + 1):
        try:
            bs = skew.branch_set(n, cap=branch_cap)
        except BranchOverflowError:
            break
        inside = np.nonzero((bs.rng_lo >= I_lo - 1e-14) & (bs.rng_hi <= I_hi + 1e-14))[0]
        if inside.size < 2:
            continue
        lo, hi = float(bs.dom_lo[inside].min()), float(bs.dom_hi[inside].max())
        best = _best_pair(skew, eta, bs, inside, lo, hi, grid)
        if best is None or best[0][0] <= 0:
            continue
        wit = _build_witness(skew, eta, bs, n, best, eps0, grid)
        if wit is not None:
            return wit
    return TransversalityWitness(found=False, verdict="not-found")


def _build_witness(skew, eta, bs, n, best, eps0, grid):
    (peak, x, sep, disjoint, k, _), k1, k2 = best
    c1 = 0.5 * peak
    # stay inside one chop piece of each branch image
    cuts = np.concatenate([_chop_edges(bs.dom_lo[k1], bs.dom_hi[k1], eps0),
                           _chop_edges(bs.dom_lo[k2], bs.dom_hi[k2], eps0)])
    left = cuts[cuts <= x[k]].max(initial=-np.inf)
    right = cuts[cuts > x[k]].min(initial=np.inf)
    mask = disjoint & (sep >= 1.2 * c1) & (x > left) & (x < right)
    i, j = _component(mask, k)
    h = x[1] - x[0]
    s_lo, s_hi = max(x[i] - 0.5 * h, left), min(x[j - 1] + 0.5 * h, right)
    # re-verify on a finer grid, trimming to the certified part
    fine = s_lo + (np.arange(REFINE * grid) + 0.5) * (s_hi - s_lo) / (REFINE * grid)
    t1, d1 = _slopes(skew, bs.words[k1], fine)
    t2, d2 = _slopes(skew, bs.words[k2], fine)
    fsep = np.abs(t1 - t2)
    ok = (fsep >= 1.1 * c1) & (fsep > eta * (np.abs(d1) + np.abs(d2)))
    kk = int(np.argmin(np.abs(fine - x[k])))
    if not ok[kk]:
        return None
    i, j = _component(ok, kk)
    fh = fine[1] - fine[0]
    o_lo, o_hi = fine[i] - 0.5 * fh, fine[j - 1] + 0.5 * fh
    o_lo, o_hi = max(o_lo, s_lo), min(o_hi, s_hi)
    m_dom = []
    for kb in (k1, k2):
        edges = _chop_edges(bs.dom_lo[kb], bs.dom_hi[kb], eps0)
        p = int(np.searchsorted(edges, 0.5 * (o_lo + o_hi), side="right") - 1)
        ends = _slopes_points(skew, bs.words[kb], edges[p : p + 2])
        m_dom.append(abs(ends[1] - ends[0]))
    w1 = tuple(int(s) for s in bs.words[k1])
    w2 = tuple(int(s) for s in bs.words[k2])
    return TransversalityWitness(
        found=True, n_delta=n, pairs=[(w1, w2)], overlap=(float(o_lo), float(o_hi)),
        separation=float(c1), delta=float(o_hi - o_lo), least_domain=float(min(m_dom)),
    )


def _slopes_points(skew, word, y):
    rows = np.broadcast_to(np.asarray(word, dtype=np.int64), (len(y), len(word)))
    return skew.pullback(rows, np.asarray(y, dtype=float))[0]


def witness_holds(skew, witness, samples=GRID * REFINE):
    """Minimum sampled separation over I_* for every recorded pair, divided by C1."""
    lo, hi = witness.overlap
    x = lo + (np.arange(samples) + 0.5) * (hi - lo) / samples
    worst = np.inf
    for w1, w2 in witness.pairs:
        t1, _ = _slopes(skew, w1, x)
        t2, _ = _slopes(skew, w2, x)
        worst = min(worst, float(np.min(np.abs(t1 - t2))))
    return worst / witness.separation


def transversality_table(skew, delta, eps0=1.0, n_max=12, grid=GRID):
    """One witness per J_l = [l delta, (l+1) delta); aggregated Delta, C1 and M."""
    k = int(math.ceil(1.0 / delta - 1e-12))
    rows = []
    for l in range(k):
        J = (l * delta, min(1.0, (l + 1) * delta))
        width = J[1] - J[0]
        w = find_overlap_witness(skew, J, min(delta, width) * 0.5, eps0=max(eps0, width), n_max=n_max, grid=grid)
        rows.append((J, w))
    missing = [J for J, w in rows if not w.found]
    per = [
        {"J": list(J), **({k_: v for k_, v in w.to_json().items() if k_ not in ("per_interval", "verdict")})}
        for J, w in rows
    ]
    if missing:
        return TransversalityWitness(found=False, per_interval=per, verdict="cohomologous-suspected")
    ws = [w for _, w in rows]
    worst = min(ws, key=lambda w: w.delta)
    return TransversalityWitness(
        found=True,
        n_delta=max(w.n_delta for w in ws),
        pairs=[w.pairs[0] for w in ws],
        overlap=worst.overlap,
        separation=min(w.separation for w in ws),
        delta=min(w.delta for w in ws),
        least_domain=min(w.least_domain for w in ws),
        per_interval=per,
    )


# ---------------------------------------------------------------------------------------
# cohomology detector
# ---------------------------------------------------------------------------------------


@dataclass
class CohomologyVerdict:
    verdict: str
    depth: int
    widths: list
    theta_x: np.ndarray = field(repr=False, default=None)
    theta: np.ndarray = field(repr=False, default=None)
    residual: float = float("nan")

    def to_json(self):
        return {
            "verdict": self.verdict,
            "depth": self.depth,
            "widths": self.widths,
            "residual": self.residual,
        }


def _cone_intersection(skew, eta, n, x):
    bs = skew.branch_set(n)
    t, d = _slope_table(skew, bs, np.arange(len(bs)), x)
    with np.errstate(invalid="ignore"):
        return np.nanmax(t - eta * d, axis=0), np.nanmin(t + eta * d, axis=0)


def cohomology_detector(skew, n_max=12, tol=1e-2, samples=64, branch_cap=2**16):
    """Intersect pushed cones over all depth-n branches at sample points.

    An empty intersection at some point certifies two transversal branches; an
    intersection that stays nonempty and shrinks yields a candidate slope field theta
    solving f' theta(f x) = tau'(x) + theta(x).
    """
    eta = cone_eta(skew)
    x = (np.arange(samples) + 0.5) / samples
    fx = np.asarray(skew.joint(x))
    pts = np.concatenate([x, fx])
    widths = []
    lo = hi = None
    depth = 0
    for n in range(1, n_max + 1):
        try:
            lo, hi = _cone_intersection(skew, eta, n, pts)
        except BranchOverflowError:
            break
        depth = n
        if np.any(lo > hi + 1e-12):
            widths.append(float(np.min(hi - lo)))
            return CohomologyVerdict("transversal", n, widths)
        widths.append(float(np.max(hi - lo)))
    theta = 0.5 * (lo + hi)
    th_x, th_fx = theta[:samples], theta[samples:]
    resid = np.abs(skew.joint.derivative(x) * th_fx - skew.roof.derivative(x) - th_x)
    residual = float(np.max(resid))
    verdict = "cohomologous-suspected" if residual <= tol else "inconclusive"
    return CohomologyVerdict(verdict, depth, widths, x, th_x, residual)
