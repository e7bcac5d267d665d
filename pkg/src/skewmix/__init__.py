"""Twisted transfer operators, standard families and oscillatory cancellation for skew products."""

from .errors import SkewmixError
from .density import GridDensity, regularity, l1_mass, comparability_check
from .maps import (
    PiecewiseMap,
    RoofFunction,
    SkewProduct,
    InverseBranch,
    inverse_branches,
    birkhoff_roof,
    roof_slope_along_branch,
    covering_time,
)
from .presets import base_map, roof_function, skew_product
from .transfer import (
    TransferConfig,
    apply_transfer,
    apply_skew_transfer_mode,
    invariant_density,
    norm_decay_profile,
    spectral_radius_estimate,
)
from .families import (
    StandardPair,
    StandardFamily,
    make_pair,
    family_from_density,
    iterate_family,
    solve_parameters,
    verify_invariance,
)
from .transversality import (
    cone_eta,
    uni_separation,
    find_overlap_witness,
    transversality_table,
    cohomology_detector,
)
from .cancellation import (
    split_pair,
    phase_difference,
    oscillation_layout,
    build_kappa,
    apply_cancellation,
    weight_reduction_step,
    decay_loop,
    holder_to_families,
)
from .correlations import (
    Observable2D,
    correlation,
    mode_split_bound,
    fit_stretched_exponential,
    split_point,
)
from .config import load_config

__version__ = "0.1.0"
