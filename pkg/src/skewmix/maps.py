"""Piecewise expanding circle maps, their inverse branches, and roof functions.

A map is given by monotone *lifts* on subintervals of [0, 1).  At construction
every lift is cut where it crosses an integer, so each resulting branch maps its
domain onto a sub-arc of [0, 1] and has a well defined inverse.  Depth-n inverse
branches are indexed by words ``(w1, ..., wn)`` of first-level branch indices:
``h = g_w1 o g_w2 o ... o g_wn`` where ``g_s`` inverts branch ``s``, so
``O_h = {x in O_w1 : f(x) in O_w2, ...}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .density import holder_estimate
from .errors import (
    BoundaryHitError,
    BranchOverflowError,
    DomainError,
    NotCoveringError,
    ValidationError,
)

SAMPLES_PER_BRANCH = 2**12
BRANCH_CAP = 2**20
EDGE_TOL = 1e-12
LN2 = math.log(2.0)


@dataclass(frozen=True)
class Lift:
    """A monotone C^{1+alpha} function on the real line with its derivative."""

    func: Callable
    deriv: Callable
    inverse: Optional[Callable] = None
    label: str = ""

    def __call__(self, x):
        return self.func(x)


def linear_lift(slope, intercept=0.0):
    slope = float(slope)
    intercept = float(intercept)
    return Lift(
        func=lambda x: slope * np.asarray(x, dtype=float) + intercept,
        deriv=lambda x: np.full(np.shape(x), slope),
        inverse=lambda y: (np.asarray(y, dtype=float) - intercept) / slope,
        label=f"{slope:g}*x+{intercept:g}",
    )


def poly_trig_lift(poly=(), trig=()):
    """``sum c_k x^k + sum A sin(2 pi nu x + phase)`` for ``trig = [(A, nu, phase), ...]``."""
    coeffs = [float(c) for c in poly]
    waves = [tuple(float(v) for v in t) for t in trig]
    if not coeffs and not waves:
        coeffs = [0.0]
    dcoeffs = [k * c for k, c in enumerate(coeffs)][1:]

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.polynomial.polynomial.polyval(x, coeffs) if coeffs else np.zeros_like(x)
        for amp, nu, ph in waves:
            out = out + amp * np.sin(2 * np.pi * nu * x + ph)
        return out

    def deriv(x):
        x = np.asarray(x, dtype=float)
        out = np.polynomial.polynomial.polyval(x, dcoeffs) if dcoeffs else np.zeros_like(x)
        for amp, nu, ph in waves:
            out = out + amp * 2 * np.pi * nu * np.cos(2 * np.pi * nu * x + ph)
        return out

    inverse = None
    if not waves and len(coeffs) <= 2 and len(coeffs) == 2 and coeffs[1] != 0.0:
        c0, c1 = coeffs
        inverse = lambda y: (np.asarray(y, dtype=float) - c0) / c1  # noqa: E731
    return Lift(func, deriv, inverse, label=f"poly{coeffs}+trig{waves}")


def _invert_monotone(lift, target, lo, hi, increasing):
    """Solve lift(x) = target on [lo, hi] by bisection then safeguarded Newton."""
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    for _ in range(34):
        mid = 0.5 * (a + b)
        below = lift.func(mid) < target
        if not increasing:
            below = ~below
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    x = 0.5 * (a + b)
    for _ in range(4):
        step = (lift.func(x) - target) / lift.deriv(x)
        x = np.clip(x - step, lo, hi)
    return x


@dataclass(frozen=True)
class Branch:
    """One monotone full-or-partial branch: domain [lo, hi) mapped by lift - offset."""

    lo: float
    hi: float
    lift: Lift
    offset: int
    increasing: bool
    image: tuple

    def forward(self, x):
        return self.lift.func(x) - self.offset

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.lift.inverse is not None:
            x = self.lift.inverse(y + self.offset)
            return np.clip(x, self.lo, self.hi)
        return _invert_monotone(self.lift, y + self.offset, self.lo, self.hi, self.increasing)


def _snap(v):
    if abs(v) < 1e-13:
        return 0.0
    if abs(v - 1.0) < 1e-13:
        return 1.0
    return v


def _split_at_integers(lo, hi, lift):
    """Cut a lift's domain where its values cross integers."""
    flo, fhi = float(lift.func(lo)), float(lift.func(hi))
    increasing = fhi > flo
    vmin, vmax = min(flo, fhi), max(flo, fhi)
    cuts = []
    m = math.floor(vmin) + 1
    while m < vmax - 1e-13:
        if m > vmin + 1e-13:
            if lift.inverse is not None:
                cuts.append(float(lift.inverse(float(m))))
            else:
                cuts.append(float(_invert_monotone(lift, np.array([float(m)]), lo, hi, increasing)[0]))
        m += 1
    edges = [lo] + sorted(cuts) + [hi]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-15:
            continue
        k = math.floor(float(lift.func(0.5 * (a + b))))
        ya, yb = float(lift.func(a)) - k, float(lift.func(b)) - k
        image = (_snap(min(ya, yb)), _snap(max(ya, yb)))
        out.append(Branch(a, b, lift, k, increasing, image))
    return out


@dataclass(frozen=True)
class BranchSet:
    """All depth-n inverse branches as parallel arrays (ordered by their ranges O_h)."""

    words: np.ndarray
    dom_lo: np.ndarray
    dom_hi: np.ndarray
    rng_lo: np.ndarray
    rng_hi: np.ndarray

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class InverseBranch:
    """A right inverse h of f^n on the interval f^n(O_h)."""

    owner: object = field(repr=False, compare=False)
    word: tuple
    domain: tuple
    range: tuple

    @property
    def depth(self):
        return len(self.word)

    def _rows(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.tile(np.asarray(self.word, dtype=np.int64), (y.size, 1)), y

    def check_domain(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.domain
        if np.any(y < lo - 1e-14) or np.any(y > hi + 1e-14):
            raise DomainError(f"point outside branch domain [{lo}, {hi}]")

    def __call__(self, y):
        words, yy = self._rows(y)
        return _shape_like(self.owner.pullback(words, yy)[0], y)

    def derivative(self, y):
        words, yy = self._rows(y)
        return _shape_like(self.owner.pullback(words, yy)[1], y)


def _shape_like(arr, ref):
    return arr.reshape(np.shape(ref)) if np.ndim(ref) else float(arr[0])


@dataclass(frozen=True)
class PiecewiseMap:
    """Piecewise C^{1+alpha} expanding map of the circle.

    ``lam`` is the expansion exponent (|f'| >= e^lam), ``distortion`` the constant D
    valid for all iterates, ``alpha`` the Hölder exponent.
    """

    branches: tuple
    alpha: float
    lam: float
    distortion: float
    name: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    # -- construction -----------------------------------------------------------------
    @classmethod
    def from_pieces(cls, pieces, lam=None, alpha=1.0, distortion=None, name="", validate=True):
        """Build from ``[(lo, hi, Lift), ...]`` covering [0, 1)."""
        pieces = sorted(pieces, key=lambda p: p[0])
        if abs(pieces[0][0]) > 1e-14 or abs(pieces[-1][1] - 1.0) > 1e-14:
            raise ValidationError("branch domains must cover [0, 1)")
        for (_, h0, _), (l1, _, _) in zip(pieces[:-1], pieces[1:]):
            if abs(h0 - l1) > 1e-14:
                raise ValidationError("branch domains must be contiguous and disjoint")
        branches = []
        for lo, hi, lift in pieces:
            branches.extend(_split_at_integers(float(lo), float(hi), lift))
        if not 0.0 < alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")
        lam_meas, d1 = _measure_branches(branches, alpha)
        if lam is None:
            lam = lam_meas
        elif validate and lam_meas < lam - 1e-12:
            raise ValidationError(
                f"sampled expansion exp({lam_meas:.6g}) below declared exp({lam:.6g})"
            )
        if validate and lam < LN2 - 1e-12:
            raise ValidationError(
                f"expansion exponent {lam:.6g} < ln 2: map is not expanding enough"
            )
        # Distortion along every iterate is bounded by the geometric sum of level-one terms.
        d_all = d1 / (1.0 - math.exp(-lam * alpha)) if d1 > 0 else 0.0
        if distortion is None:
            distortion = d_all
        elif validate and d1 > distortion * (1 + 1e-9) + 1e-12:
            raise ValidationError(
                f"sampled distortion {d1:.6g} exceeds declared D={distortion:.6g}"
            )
        return cls(tuple(branches), float(alpha), float(lam), float(distortion), name)

    def refine(self, points):
        """Split branches at the given interior points (joint partition with a roof)."""
        branches = []
        for br in self.branches:
            cuts = sorted(p for p in points if br.lo + 1e-14 < p < br.hi - 1e-14)
            edges = [br.lo] + cuts + [br.hi]
            for a, b in zip(edges[:-1], edges[1:]):
                ya, yb = float(br.forward(a)), float(br.forward(b))
                image = (_snap(min(ya, yb)), _snap(max(ya, yb)))
                branches.append(Branch(a, b, br.lift, br.offset, br.increasing, image))
        return PiecewiseMap(tuple(branches), self.alpha, self.lam, self.distortion, self.name)

    # -- evaluation ---------------------------------------------------------------------
    @property
    def breakpoints(self):
        return np.array([b.lo for b in self.branches] + [1.0])

    @property
    def strictly_expanding(self):
        """True when lam > ln 2, the regime where boundary growth contracts."""
        return self.lam > LN2 + 1e-12

    def branch_index(self, x):
        los = np.array([b.lo for b in self.branches])
        idx = np.searchsorted(los, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.branches) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty(np.shape(x))
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.branches[i].forward(x[mask])
        return np.mod(out, 1.0) if out.ndim else float(np.mod(out, 1.0))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty(np.shape(x))
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.branches[i].lift.deriv(x[mask])
        return out if out.ndim else float(out)

    def pullback(self, words, y, roof=None, roof_index=None):
        return _pullback(self.branches, words, y, roof, roof_index)

    # -- inverse branches --------------------------------------------------------------
    def branch_set(self, n, cap=BRANCH_CAP):
        if n < 1:
            raise ValueError("depth must be >= 1")
        key = ("branches", n)
        if key in self._cache:
            return self._cache[key]
        if n == 1:
            nb = len(self.branches)
            bs = BranchSet(
                np.arange(nb, dtype=np.int64)[:, None],
                np.array([b.image[0] for b in self.branches]),
                np.array([b.image[1] for b in self.branches]),
                np.array([b.lo for b in self.branches]),
                np.array([b.hi for b in self.branches]),
            )
        else:
            prev = self.branch_set(n - 1, cap)
            bs = _extend(self, prev, cap)
        self._cache[key] = bs
        return bs

    def image_of_intervals(self, intervals):
        """Forward image f(S) of a finite union of closed intervals, merged."""
        out = []
        for a, b in intervals:
            for br in self.branches:
                lo, hi = max(a, br.lo), min(b, br.hi)
                if hi - lo > 1e-15:
                    ya, yb = float(br.forward(lo)), float(br.forward(hi))
                    out.append((min(ya, yb), max(ya, yb)))
        return merge_intervals(out)


def _pullback(branches, words, y, roof=None, roof_index=None):
    """Evaluate h(y), h'(y), tau_n(h(y)) and (tau_n o h)'(y) row by row.

    ``words`` has one row per entry of ``y``.
    """
    words = np.asarray(words, dtype=np.int64)
    z = np.array(y, dtype=float, copy=True)
    d = np.ones_like(z)
    tsum = np.zeros_like(z)
    tslope = np.zeros_like(z)
    n = words.shape[1]
    fp = np.empty_like(z)
    tv = np.zeros_like(z)
    td = np.zeros_like(z)
    for k in range(n - 1, -1, -1):
        col = words[:, k]
        for s in np.unique(col):
            mask = col == s
            br = branches[s]
            zs = br.inverse(z[mask])
            z[mask] = zs
            fp[mask] = br.lift.deriv(zs)
            if roof is not None:
                piece = roof.pieces[roof_index[s]]
                tv[mask] = piece.func(zs)
                td[mask] = piece.deriv(zs)
        d = d / fp
        if roof is not None:
            tsum += tv
            tslope += td * d
    return z, d, tsum, tslope


def _extend(pmap, prev, cap):
    new_words, dlo, dhi, src, ilo, ihi = [], [], [], [], [], []
    for s, br in enumerate(pmap.branches):
        lo = np.maximum(prev.dom_lo, br.lo)
        hi = np.minimum(prev.dom_hi, br.hi)
        keep = np.nonzero(hi - lo > 1e-14)[0]
        if keep.size == 0:
            continue
        ya = br.forward(lo[keep])
        yb = br.forward(hi[keep])
        dlo.append(np.minimum(ya, yb))
        dhi.append(np.maximum(ya, yb))
        ilo.append(lo[keep])
        ihi.append(hi[keep])
        src.append(keep)
        new_words.append(
            np.hstack([prev.words[keep], np.full((keep.size, 1), s, dtype=np.int64)])
        )
    count = sum(len(k) for k in src)
    if count > cap:
        raise BranchOverflowError(f"{count} inverse branches exceed the cap {cap}")
    words = np.vstack(new_words)
    src = np.concatenate(src)
    ilo, ihi = np.concatenate(ilo), np.concatenate(ihi)
    prev_words = prev.words[src]
    ra = pmap.pullback(prev_words, ilo)[0]
    rb = pmap.pullback(prev_words, ihi)[0]
    rlo, rhi = np.minimum(ra, rb), np.maximum(ra, rb)
    order = np.argsort(rlo, kind="stable")
    snap = np.vectorize(_snap)
    return BranchSet(
        words[order],
        snap(np.concatenate(dlo)[order]),
        snap(np.concatenate(dhi)[order]),
        snap(rlo[order]),
        snap(rhi[order]),
    )


def _measure_branches(branches, alpha):
    """Sampled expansion exponent and level-one distortion constant."""
    min_slope = np.inf
    d1 = 0.0
    for br in branches:
        x = np.linspace(br.lo, br.hi, SAMPLES_PER_BRANCH + 1)
        slope = np.abs(br.lift.deriv(x))
        min_slope = min(min_slope, float(slope.min()))
        y = np.linspace(br.image[0], br.image[1], SAMPLES_PER_BRANCH + 1)
        logd = -np.log(np.abs(br.lift.deriv(br.inverse(y))))
        if y[-1] > y[0]:
            d1 = max(d1, holder_estimate(logd, (y[-1] - y[0]) / SAMPLES_PER_BRANCH, alpha))
    if min_slope <= 0:
        raise ValidationError("branch with vanishing derivative")
    return math.log(min_slope), d1


def merge_intervals(intervals, gap=1e-12):
    if not intervals:
        return []
    intervals = sorted(intervals)
    out = [list(intervals[0])]
    for a, b in intervals[1:]:
        if a <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [tuple(iv) for iv in out]


# ---------------------------------------------------------------------------------------
# Roof functions and skew products
# ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class RoofPiece:
    lo: float
    hi: float
    func: Callable
    deriv: Callable


@dataclass(frozen=True)
class RoofFunction:
    """Piecewise C^1 roof tau on the circle.

    ``c_tau`` bounds |(tau_n o h)'| uniformly; ``deriv_sup`` optionally declares sup|tau'|.
    """

    pieces: tuple
    c_tau: Optional[float] = None
    deriv_sup: Optional[float] = None
    name: str = ""

    @classmethod
    def from_pieces(cls, pieces, c_tau=None, deriv_sup=None, name=""):
        pieces = tuple(sorted((RoofPiece(*p) for p in pieces), key=lambda p: p.lo))
        if abs(pieces[0].lo) > 1e-14 or abs(pieces[-1].hi - 1.0) > 1e-14:
            raise ValidationError("roof pieces must cover [0, 1)")
        return cls(pieces, c_tau, deriv_sup, name)

    @property
    def breakpoints(self):
        return [p.lo for p in self.pieces[1:]]

    def _index(self, x):
        los = np.array([p.lo for p in self.pieces])
        return np.clip(np.searchsorted(los, x, side="right") - 1, 0, len(self.pieces) - 1)

    def _eval(self, x, attr):
        x = np.asarray(x, dtype=float)
        idx = self._index(x)
        out = np.empty(np.shape(x))
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = getattr(self.pieces[i], attr)(x[mask])
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self._eval(x, "func")

    def derivative(self, x):
        return self._eval(x, "deriv")

    def sup_derivative(self):
        if self.deriv_sup is not None:
            return float(self.deriv_sup)
        best = 0.0
        for p in self.pieces:
            x = np.linspace(p.lo, p.hi, SAMPLES_PER_BRANCH + 1)
            best = max(best, float(np.max(np.abs(p.deriv(x)))))
        return best


@dataclass(frozen=True)
class SkewProduct:
    """F(x, y) = (f(x), y + tau(x)) on the two-torus.

    ``joint`` is the base map refined by the roof's breakpoints; all inverse-branch
    machinery runs on it so that tau_n o h is C^1 on every branch domain.
    """

    base: PiecewiseMap
    roof: RoofFunction
    c_tau: float
    joint: PiecewiseMap = field(repr=False)
    roof_index: tuple = field(repr=False)
    name: str = ""

    @classmethod
    def build(cls, base, roof, name="", validate=True, check_depth=6):
        joint = base.refine(roof.breakpoints)
        mids = np.array([0.5 * (b.lo + b.hi) for b in joint.branches])
        roof_index = tuple(int(i) for i in np.atleast_1d(roof._index(mids)))
        if roof.c_tau is not None:
            c_tau = float(roof.c_tau)
        else:
            # sup|tau'| * sum_{j>=1} e^{-lam j}, padded for sampling error
            c_tau = roof.sup_derivative() / math.expm1(base.lam) * (1 + 1e-3)
        skew = cls(base, roof, c_tau, joint, roof_index, name or f"{base.name}+{roof.name}")
        if validate:
            skew.check_roof_regularity(check_depth)
        return skew

    @property
    def lam(self):
        return self.base.lam

    def pullback(self, words, y):
        return self.joint.pullback(words, y, self.roof, self.roof_index)

    def branch_set(self, n, cap=BRANCH_CAP):
        return self.joint.branch_set(n, cap)

    def check_roof_regularity(self, max_depth=6, points=64, max_branches=4096):
        """Sampled check of |(tau_n o h)'| <= C_tau; returns the largest value seen."""
        worst = 0.0
        for n in range(1, max_depth + 1):
            try:
                bs = self.branch_set(n, cap=max_branches)
            except BranchOverflowError:
                break
            t = (np.arange(points) + 0.5) / points
            y = bs.dom_lo[:, None] + t[None, :] * (bs.dom_hi - bs.dom_lo)[:, None]
            rows = np.repeat(bs.words, points, axis=0)
            slope = self.pullback(rows, y.ravel())[3]
            worst = max(worst, float(np.max(np.abs(slope))))
        if worst > self.c_tau * (1 + 1e-9) + 1e-12:
            raise ValidationError(
                f"sampled |(tau_n o h)'| = {worst:.6g} exceeds C_tau = {self.c_tau:.6g}"
            )
        return worst


# ---------------------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------------------


def _owner(obj):
    return obj.joint if isinstance(obj, SkewProduct) else obj


def inverse_branches(obj, n, cap=BRANCH_CAP):
    """All depth-n inverse branches of a map (or of a skew product's joint partition)."""
    bs = _owner(obj).branch_set(n, cap)
    return [
        InverseBranch(obj, tuple(int(s) for s in w), (float(a), float(b)), (float(c), float(d)))
        for w, a, b, c, d in zip(bs.words, bs.dom_lo, bs.dom_hi, bs.rng_lo, bs.rng_hi)
    ]


def birkhoff_roof(skew, n, x):
    """tau_n(x) = sum_{j<n} tau(f^j x), refusing orbits that hit a discontinuity."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(np.shape(x))
    bp = skew.joint.breakpoints
    z = x.copy()
    for _ in range(n):
        dist = np.min(np.abs(np.atleast_1d(z)[:, None] - bp[None, :]), axis=1)
        if np.any(dist < EDGE_TOL):
            raise BoundaryHitError("orbit hits a partition endpoint")
        total = total + skew.roof(z)
        z = skew.joint(z)
    return total if total.ndim else float(total)


def roof_slope_along_branch(skew, h, x):
    """(tau_n o h)'(x) by the chain rule along the branch word."""
    h.check_domain(x)
    words, y = h._rows(x)
    return _shape_like(skew.pullback(words, y)[3], x)


def covering_time(pmap, n, cap=64, tol=1e-12):
    """Smallest N with f^N(O_h) = circle (up to measure tol) for every depth-n h."""
    bs = _owner(pmap).branch_set(n)
    owner = _owner(pmap)
    worst = 0
    for lo, hi in zip(bs.rng_lo, bs.rng_hi):
        sets = [(float(lo), float(hi))]
        for k in range(1, cap + 1):
            sets = owner.image_of_intervals(sets)
            if sum(b - a for a, b in sets) >= 1.0 - tol:
                worst = max(worst, k)
                break
        else:
            raise NotCoveringError(f"cylinder [{lo}, {hi}) does not cover within {cap} steps")
    return worst


def branch_mass_sum(pmap, n):
    """sum over depth-n branches of sup |h'| (summability proxy)."""
    owner = _owner(pmap)
    bs = owner.branch_set(n)
    total = 0.0
    for i in range(len(bs)):
        y = np.linspace(bs.dom_lo[i], bs.dom_hi[i], 33)
        rows = np.repeat(bs.words[i : i + 1], y.size, axis=0)
        total += float(np.max(np.abs(owner.pullback(rows, y)[1])))
    return total
