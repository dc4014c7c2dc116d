"""Heterogeneous treatment effects in sharp regression discontinuity designs.

Estimation and robust bias-corrected inference for effects at a cutoff:
overall, by subgroup for mutually exclusive binary covariates, and as
functional coefficients for generic covariates, with efficiency-covariate
adjustment, plug-in bandwidth selection, and post-estimation linear
combinations.
"""

from .bandwidth import (
    BandwidthPolicy,
    BandwidthResult,
    boundary_constants,
    plugin_h,
    resolve_policy,
    select_bandwidth,
)
from .data import (
    ColumnRoles,
    CovariateSpec,
    HeterogeneityDesign,
    Sample,
    build_treatment,
    classify_heterogeneity,
    load_csv,
    parse_covariate_spec,
)
from .design import DesignMatrix, build_design, drop_collinear, poly_basis
from .errors import RdheteroError
from .estimator import (
    EffectRow,
    EstimationConfig,
    RdResult,
    cate_at,
    estimate,
    estimate_ate,
    estimate_generic,
    estimate_subgroup,
    rbc_pair,
)
from .kernels import KERNELS, kernel_value, localization_weights
from .montecarlo import DgpSpec, PRESETS, coverage_experiment, generate
from .posthoc import LinearCombo, lincom, parse_combo, wald_test
from .wls import VceKind, WlsFit, sandwich_vcov, wls_fit

__version__ = "0.1.0"

__all__ = [
    "BandwidthPolicy",
    "BandwidthResult",
    "ColumnRoles",
    "CovariateSpec",
    "DesignMatrix",
    "DgpSpec",
    "EffectRow",
    "EstimationConfig",
    "HeterogeneityDesign",
    "KERNELS",
    "LinearCombo",
    "PRESETS",
    "RdResult",
    "RdheteroError",
    "Sample",
    "VceKind",
    "WlsFit",
    "boundary_constants",
    "build_design",
    "build_treatment",
    "cate_at",
    "classify_heterogeneity",
    "coverage_experiment",
    "drop_collinear",
    "estimate",
    "estimate_ate",
    "estimate_generic",
    "estimate_subgroup",
    "generate",
    "kernel_value",
    "lincom",
    "load_csv",
    "localization_weights",
    "parse_combo",
    "parse_covariate_spec",
    "plugin_h",
    "poly_basis",
    "rbc_pair",
    "resolve_policy",
    "sandwich_vcov",
    "select_bandwidth",
    "wald_test",
    "wls_fit",
]
