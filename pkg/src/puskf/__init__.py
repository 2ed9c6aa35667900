"""Partial-update Schmidt-Kalman filters in full, square-root and UD forms."""
from .errors import (
    ConfigError,
    DegenerateCloud,
    EstimationError,
    FilterDiverged,
    InvalidRunCount,
    NoVisibleFeatures,
)
from .factorizations import UdFactors, cholesky_lower, mgs_triangularize, symmetric_sqrt, udu_decompose, wmgs
from .filter_core import (
    GaussianBelief,
    NonlinearSystem,
    SqrtFactor,
    UpdateWeights,
    batch_partial_update,
    ekf_propagate,
    ekf_update,
    kalman_gain,
    partial_update,
    schmidt_update_block,
    sequential_update,
)
from .dynamic_weights import WeightPolicy, dc_select, dnl_select, select_weights
from .harness import MonteCarloReport, compare_forms, consistency_stats, divergence_detect, monte_carlo, run_scenario
from .mekf import MekfLayout, MekfState, pu_mekf_update
from .runner import RunRecord
from .sqrt_filter import potter_scalar_update, sr_sequential_update, sr_vector_update
from .ud_filter import ud_sequential_update, ud_update

__version__ = "0.1.0"
