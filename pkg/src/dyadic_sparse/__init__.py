"""Sparse domination, median oscillation and Calderon-Zygmund tools on weighted dyadic grids."""

from .applications import (
    TransformCoefficients,
    bmo_norm,
    dominate_martingale_transform,
    jn_profile,
    martingale_difference,
    martingale_transform,
    oscillation_estimate_check,
)
from .czd import cz_decompose, verify_czd_contract
from .dyadic_core import CubeId, DyadicGrid, SparseFamily, WeightedGrid, verify_sparse
from .errors import *  # noqa: F401,F403
from .instance import Instance
from .instance_gen import GenSpec, generate
from .median_core import median, median_interval, omega_lambda, r_lambda
from .median_decomposition import build_median_decomposition, verify_median_decomposition
from .positive_operators import PositiveOperator, ProbePolicy, estimate_weak_norm, weak_l1_quasinorm
from .sparse_domination import DominationConfig, build_sparse_domination, verify_pointwise_domination

__version__ = "0.1.0"
