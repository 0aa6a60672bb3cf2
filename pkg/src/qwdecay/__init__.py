"""Exponential-decay certification for eigenfunctions of coined quantum walks
with a single coin defect on a periodic d-dimensional lattice."""

from qwdecay.lattice import (
    DiagonalWeight,
    LatticeBox,
    WaveFunction,
    build_box,
    ceil_b,
    exp_weight,
    lambda_weight,
    lambda_weight_truncated,
    shell_projector,
)
from qwdecay.walk import (
    BlochSymbol,
    CoinSpec,
    ShiftParams,
    WalkOperator,
    bloch_symbol,
    build_coin,
    build_shift,
    build_walk,
    validate_coin_spec,
    validate_shift_params,
)
from qwdecay.spectrum import (
    DetectionCriteria,
    EssentialArcs,
    SpectrumResult,
    detect_discrete,
    eigendecompose,
    essential_arcs,
    gap_distance,
    operator_norm,
)
from qwdecay.certify import (
    CertifyOptions,
    CheckReport,
    DecayCertificate,
    certify,
    check_cutoff_commutator,
    check_exp_commutator,
    check_gap_lower_bound,
    delta_max,
    exp_summability,
    fit_decay_rate,
    pointwise_constant,
    propagation_bound,
    shell_norms,
)

__version__ = "0.1.0"
