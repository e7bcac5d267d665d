"""Named maps, roofs and skew products."""

import math
import re

import numpy as np

from .errors import ConfigError
from .maps import PiecewiseMap, RoofFunction, SkewProduct, linear_lift

TWO_PI = 2 * np.pi


def times_map(k):
    return PiecewiseMap.from_pieces(
        [(0.0, 1.0, linear_lift(k))], lam=math.log(k), alpha=1.0, distortion=0.0, name=f"times{k}"
    )


def unequal_map():
    """Two full branches with slopes 3 on [0, 1/2) and 5 on [1/2, 1)."""
    pieces = [(0.0, 0.5, linear_lift(3.0)), (0.5, 1.0, linear_lift(5.0, -2.5))]
    return PiecewiseMap.from_pieces(pieces, lam=math.log(3), alpha=1.0, distortion=0.0, name="unequal")


def rejected_map():
    """Slopes 3 and 3/2: fails the expansion requirement at construction."""
    pieces = [(0.0, 1 / 3, linear_lift(3.0)), (1 / 3, 1.0, linear_lift(1.5, -0.5))]
    return PiecewiseMap.from_pieces(pieces, name="rejected")


def base_map(name):
    if name == "doubling":
        return times_map(2)
    if name == "tripling":
        return times_map(3)
    if name == "unequal":
        return unequal_map()
    m = re.fullmatch(r"times(\d+)", name)
    if m and int(m.group(1)) >= 2:
        return times_map(int(m.group(1)))
    raise ConfigError(f"unknown map preset {name!r}")


def _single(func, deriv, **kw):
    return RoofFunction.from_pieces([(0.0, 1.0, func, deriv)], **kw)


def roof_function(name, lam=None, value=1.0):
    """Roof presets; ``lam`` sets the default C_tau = sup|tau'| / (e^lam - 1)."""
    expm1 = math.expm1(lam) if lam else None

    def ctau(sup):
        return sup / expm1 if expm1 else None

    if name == "zero":
        return _single(lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x)),
                       c_tau=0.0, deriv_sup=0.0, name="zero")
    if name == "const":
        return _single(lambda x: np.full(np.shape(x), float(value)), lambda x: np.zeros(np.shape(x)),
                       c_tau=0.0, deriv_sup=0.0, name="const")
    if name == "cos":
        return _single(lambda x: np.cos(TWO_PI * np.asarray(x)),
                       lambda x: -TWO_PI * np.sin(TWO_PI * np.asarray(x)),
                       c_tau=ctau(TWO_PI), deriv_sup=TWO_PI, name="cos")
    if name == "x":
        return _single(lambda x: np.asarray(x, dtype=float), lambda x: np.ones(np.shape(x)),
                       c_tau=ctau(1.0), deriv_sup=1.0, name="x")
    if name == "coboundary":
        # sin 4 pi x - sin 2 pi x = phi o f - phi for phi = sin 2 pi x and f doubling
        return _single(
            lambda x: np.sin(2 * TWO_PI * np.asarray(x)) - np.sin(TWO_PI * np.asarray(x)),
            lambda x: 2 * TWO_PI * np.cos(2 * TWO_PI * np.asarray(x)) - TWO_PI * np.cos(TWO_PI * np.asarray(x)),
            c_tau=3 * np.pi, deriv_sup=3 * TWO_PI, name="coboundary",
        )
    raise ConfigError(f"unknown roof preset {name!r}")


SKEW_PRESETS = {
    "doubling_cos": ("doubling", "cos"),
    "tripling_cos": ("tripling", "cos"),
    "times8_cos": ("times8", "cos"),
    "coboundary": ("doubling", "coboundary"),
    "doubling_zero": ("doubling", "zero"),
    "doubling_const": ("doubling", "const"),
    "tripling_x": ("tripling", "x"),
    "unequal_cos": ("unequal", "cos"),
}


def skew_product(name, **kw):
    if name not in SKEW_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(SKEW_PRESETS)}")
    mname, rname = SKEW_PRESETS[name]
    base = base_map(mname)
    return SkewProduct.build(base, roof_function(rname, base.lam), name=name, **kw)
