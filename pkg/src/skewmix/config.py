"""JSON run configuration.

    {"map": "doubling" | {"pieces": [{"lo": 0, "hi": 0.5, "poly": [0, 2], "trig": [[A, nu, phase]]}]},
     "roof": "cos" | {"pieces": [{"lo": 0, "hi": 1, "poly": [...], "trig": [...]}]},
     "constants": {"lambda": ..., "alpha": ..., "D": ..., "C_tau": ...},
     "experiment": {...}}

``{"preset": "doubling_cos"}`` may replace the map and roof entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SkewmixError
from .maps import PiecewiseMap, RoofFunction, SkewProduct, poly_trig_lift
from .presets import SKEW_PRESETS, base_map, roof_function, skew_product


@dataclass
class RunConfig:
    skew: SkewProduct
    experiment: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)


def _lift(spec):
    try:
        return poly_trig_lift(spec.get("poly", ()), spec.get("trig", ()))
    except SkewmixError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad piece {spec!r}: {exc}") from exc


def _build_map(spec, consts):
    if isinstance(spec, str):
        return base_map(spec)
    if not isinstance(spec, dict) or "pieces" not in spec:
        raise ConfigError("map must be a preset name or {'pieces': [...]}")
    pieces = [(float(p["lo"]), float(p["hi"]), _lift(p)) for p in spec["pieces"]]
    return PiecewiseMap.from_pieces(
        pieces,
        lam=consts.get("lambda"),
        alpha=float(consts.get("alpha", 1.0)),
        distortion=consts.get("D"),
        name=spec.get("name", "custom"),
    )


def _build_roof(spec, consts, lam):
    c_tau = consts.get("C_tau")
    if isinstance(spec, str):
        roof = roof_function(spec, lam)
        if c_tau is not None:
            roof = RoofFunction(roof.pieces, float(c_tau), roof.deriv_sup, roof.name)
        return roof
    if not isinstance(spec, dict) or "pieces" not in spec:
        raise ConfigError("roof must be a preset name or {'pieces': [...]}")
    pieces = []
    for p in spec["pieces"]:
        lift = _lift(p)
        pieces.append((float(p["lo"]), float(p["hi"]), lift.func, lift.deriv))
    deriv_sup = spec.get("sup_derivative")
    if c_tau is None and deriv_sup is not None:
        c_tau = float(deriv_sup) / math.expm1(lam)
    return RoofFunction.from_pieces(pieces, c_tau, deriv_sup, spec.get("name", "custom"))


def build_skew(data):
    consts = data.get("constants", {}) or {}
    if "preset" in data:
        if data["preset"] not in SKEW_PRESETS:
            raise ConfigError(f"unknown preset {data['preset']!r}; known: {sorted(SKEW_PRESETS)}")
        if not consts:
            return skew_product(data["preset"])
        mname, rname = SKEW_PRESETS[data["preset"]]
        data = {"map": mname, "roof": rname, "constants": consts}
    if "map" not in data or "roof" not in data:
        raise ConfigError("config needs 'preset' or both 'map' and 'roof'")
    base = _build_map(data["map"], consts)
    roof = _build_roof(data["roof"], consts, base.lam)
    return SkewProduct.build(base, roof, name=data.get("name", "custom"))


def parse_config(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return RunConfig(build_skew(data), dict(data.get("experiment", {}) or {}), data)


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


def parse_range(text):
    """'1..8' -> [1, ..., 8]; '1,4,9' -> [1, 4, 9]; '500' -> [500]."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (float(t) for t in text.split("..", 1))
            return [float(v) for v in np.arange(lo, hi + 0.5)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc
