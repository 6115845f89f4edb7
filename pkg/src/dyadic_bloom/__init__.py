"""Dyadic harmonic analysis on finite grids: Haar systems, Ap and Bloom
weights, paraproducts, dyadic shifts, weighted BMO and commutator norms."""

from .grid import Cube, Grid, GridError, ancestor, descendants, make_grid
from .haar import (
    HaarCoeffs,
    StepFunction,
    analyze,
    haar_function,
    signature_add,
    signatures,
    synthesize,
)
from .weights import (
    Weight,
    ap_characteristic,
    bloom,
    check_nu_a2,
    conjugate,
    gen_cascade_weight,
    nu_holder_check,
)
from .operators import (
    LinearMap,
    commutator,
    lambda_op,
    maximal,
    paraproduct,
    product_decomposition_check,
    shifted_square_function,
    square_function,
)
from .shifts import (
    ShiftOperator,
    apply_shift,
    commutator_split,
    kappa,
    make_noncancellative_shift,
    make_random_shift,
    remainder,
    remainder_terms,
)
from .bmo import b1, b2, bmo_equivalence_report, bmo_norm, bmo_q_norm, cm1_norm, duality_check, h1_norm
from .norms import NormEstimate, inequality_sweep, opnorm_l2, opnorm_lp, weighted_lp_norm

__version__ = "0.1.0"

__all__ = [
    "Cube",
    "Grid",
    "GridError",
    "ancestor",
    "descendants",
    "make_grid",
    "HaarCoeffs",
    "StepFunction",
    "analyze",
    "haar_function",
    "signature_add",
    "signatures",
    "synthesize",
    "Weight",
    "ap_characteristic",
    "bloom",
    "check_nu_a2",
    "conjugate",
    "gen_cascade_weight",
    "nu_holder_check",
    "LinearMap",
    "commutator",
    "lambda_op",
    "maximal",
    "paraproduct",
    "product_decomposition_check",
    "shifted_square_function",
    "square_function",
    "ShiftOperator",
    "apply_shift",
    "commutator_split",
    "kappa",
    "make_noncancellative_shift",
    "make_random_shift",
    "remainder",
    "remainder_terms",
    "b1",
    "b2",
    "bmo_equivalence_report",
    "bmo_norm",
    "bmo_q_norm",
    "cm1_norm",
    "duality_check",
    "h1_norm",
    "NormEstimate",
    "inequality_sweep",
    "opnorm_l2",
    "opnorm_lp",
    "weighted_lp_norm",
]
