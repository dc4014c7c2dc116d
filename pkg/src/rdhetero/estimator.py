"""Estimation orchestration for cutoff effects.

Three layouts share one engine:

  ATE        no heterogeneity covariates; one effect row.
  Subgroup   mutually exclusive binary W; by default each group is
             estimated on its own subsample with its own bandwidth, or a
             single saturated fit when a joint bandwidth is requested.
  Generic    anything else; one joint fit whose reported rows are the
             treatment intercept and the treatment interaction with each
             W column, so kappa(w) = T-row + sum_j w_j * (T#w_j)-row.

Every fit is performed twice with the same bandwidth and weights: at the
requested order (p, s) for the conventional point estimate, and at
(p+1, s+1) for the bias-corrected estimate whose sandwich variance drives
all reported inference.  Forcing the same bandwidth for both fits is the
rho = 1 convention; no second bandwidth exists anywhere in the API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .bandwidth import BandwidthPolicy, resolve_policy, select_bandwidth
from .data import HeterogeneityDesign, Sample, build_treatment
from .design import DesignMatrix, build_design, drop_collinear
from .errors import (
    DegenerateScore,
    DimensionMismatch,
    InsufficientObservations,
)
from .kernels import KERNELS, localization_weights
from .wls import VceKind, WlsFit, sandwich_vcov, wls_fit

ATE_LABEL = "ATE"
TREAT_COL = "T"


@dataclass(frozen=True)
class EstimationConfig:
    cutoff: float
    p: int = 1
    s: int | None = None
    kernel: str = "triangular"
    vce: VceKind = VceKind("hc3")
    level: float = 0.95
    bandwidth: BandwidthPolicy = BandwidthPolicy()
    regularize: bool = True

    def __post_init__(self):
        if self.p < 0 or (self.s is not None and self.s < 0):
            raise ValueError("polynomial orders must be >= 0")
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must be in (0, 1)")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    @property
    def s_resolved(self) -> int:
        return self.p if self.s is None else self.s


@dataclass(frozen=True)
class EffectRow:
    label: str
    conventional: float
    rbc: float
    se: float
    z: float
    p_value: float
    ci_low: float
    ci_high: float
    h: float
    n_left: int
    n_right: int
    # kept for simulation comparisons, not part of the serialized schema
    conventional_se: float = math.nan


@dataclass(frozen=True)
class RdResult:
    mode: str  # "ate" | "subgroup" | "generic"
    rows: list[EffectRow]
    theta_labels: list[str]
    theta_hat: np.ndarray
    V_rbc: np.ndarray
    config: EstimationConfig
    joint_fit: bool
    group_labels: list[str] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def level(self) -> float:
        return self.config.level


@dataclass(frozen=True)
class FitBundle:
    """One weighted fit plus its robust covariance."""

    design: DesignMatrix
    fit: WlsFit
    vcov: np.ndarray
    weights: np.ndarray

    def coef(self, name: str) -> float:
        return float(self.fit.beta[self.design.index_of(name)])

    def se(self, name: str) -> float:
        j = self.design.index_of(name)
        return float(np.sqrt(self.vcov[j, j]))


def _zcrit(level: float) -> float:
    return float(norm.ppf(0.5 + level / 2.0))


def _fit_once(
    y: np.ndarray,
    xc: np.ndarray,
    t: np.ndarray,
    p: int,
    s: int,
    kernel: str,
    h: float,
    vce: VceKind,
    clusters: np.ndarray | None,
    W: np.ndarray | None = None,
    w_names: list[str] | None = None,
    Z: np.ndarray | None = None,
    z_names: list[str] | None = None,
    subgroup: bool = False,
) -> FitBundle:
    weights = localization_weights(kernel, xc, 0.0, h)
    pos = weights > 0
    n_right = int((pos & (t == 1.0)).sum())
    n_left = int((pos & (t == 0.0)).sum())
    if n_right < p + 1 or n_left < p + 1:
        raise InsufficientObservations(
            f"window h={h:g} holds {n_left} control and {n_right} treated points; "
            f"order {p} needs at least {p + 1} per side"
        )
    D = build_design(xc, t, p, s, W, w_names, Z, z_names, subgroup=subgroup)
    D = drop_collinear(D, weights)
    fit = wls_fit(D, weights, y)
    vcov = sandwich_vcov(fit, D, weights, vce, clusters)
    return FitBundle(design=D, fit=fit, vcov=vcov, weights=weights)


def rbc_pair(
    y: np.ndarray,
    xc: np.ndarray,
    t: np.ndarray,
    h: float,
    config: EstimationConfig,
    W: np.ndarray | None = None,
    w_names: list[str] | None = None,
    Z: np.ndarray | None = None,
    z_names: list[str] | None = None,
    clusters: np.ndarray | None = None,
    subgroup: bool = False,
) -> tuple[FitBundle, FitBundle]:
    """Conventional (p, s) and bias-corrected (p+1, s+1) fits at one bandwidth."""
    p, s = config.p, config.s_resolved
    common = dict(
        kernel=config.kernel,
        h=h,
        vce=config.vce,
        clusters=clusters,
        W=W,
        w_names=w_names,
        Z=Z,
        z_names=z_names,
        subgroup=subgroup,
    )
    conv = _fit_once(y, xc, t, p, s, **common)
    rbc = _fit_once(y, xc, t, p + 1, s + 1, **common)
    return conv, rbc


def _make_row(
    label: str,
    conv: float,
    conv_se: float,
    rbc: float,
    se: float,
    h: float,
    n_left: int,
    n_right: int,
    level: float,
) -> EffectRow:
    if se > 0 and math.isfinite(se):
        z = rbc / se
        p_value = float(2.0 * norm.sf(abs(z)))
    else:
        z, p_value = math.nan, math.nan
    zc = _zcrit(level)
    return EffectRow(
        label=label,
        conventional=conv,
        rbc=rbc,
        se=se,
        z=z,
        p_value=p_value,
        ci_low=rbc - zc * se,
        ci_high=rbc + zc * se,
        h=h,
        n_left=n_left,
        n_right=n_right,
        conventional_se=conv_se,
    )


def _missing_row(label: str) -> EffectRow:
    nan = math.nan
    return EffectRow(label, nan, nan, nan, nan, nan, nan, nan, nan, 0, 0, nan)


def _side_counts(weights: np.ndarray, t: np.ndarray, mask: np.ndarray | None = None):
    pos = weights > 0
    if mask is not None:
        pos = pos & mask
    return int((pos & (t == 0.0)).sum()), int((pos & (t == 1.0)).sum())


def _ate_engine(sample: Sample, config: EstimationConfig, h: float, label: str) -> tuple[EffectRow, float]:
    """One plain cutoff-jump estimate on a (sub)sample; returns row and variance."""
    xc = sample.x - config.cutoff
    t = build_treatment(sample.x, config.cutoff)
    conv, rbc = rbc_pair(
        sample.y, xc, t, h, config,
        Z=sample.z_matrix(), z_names=sample.z_names(),
        clusters=sample.cluster,
    )
    n_left, n_right = _side_counts(rbc.weights, t)
    row = _make_row(
        label,
        conv.coef(TREAT_COL), conv.se(TREAT_COL),
        rbc.coef(TREAT_COL), rbc.se(TREAT_COL),
        h, n_left, n_right, config.level,
    )
    j = rbc.design.index_of(TREAT_COL)
    return row, float(rbc.vcov[j, j])


def estimate_ate(sample: Sample, config: EstimationConfig) -> RdResult:
    """Average effect at the cutoff, no heterogeneity covariates."""
    policy = config.bandwidth
    if policy.kind == "manual":
        h = float(policy.h)
    else:
        h, _ = select_bandwidth(
            sample.x, sample.y, config.cutoff, config.p, config.kernel, config.regularize
        )
    row, var = _ate_engine(sample, config, h, ATE_LABEL)
    return RdResult(
        mode="ate",
        rows=[row],
        theta_labels=[ATE_LABEL],
        theta_hat=np.array([row.rbc]),
        V_rbc=np.array([[var]]),
        config=config,
        joint_fit=False,
    )


def estimate_subgroup(
    sample: Sample, design: HeterogeneityDesign, config: EstimationConfig
) -> RdResult:
    """Per-group effects for mutually exclusive binary covariates."""
    if design.mode != "subgroup":
        raise ValueError("estimate_subgroup requires a subgroup design")
    policy = config.bandwidth
    if policy.joint:
        return _subgroup_joint(sample, design, config)

    rows: list[EffectRow] = []
    kept: list[str] = []
    variances: list[float] = []
    warnings_out: list[str] = []
    for label in design.group_labels:
        sub = sample.subset(design.group_mask(label))
        try:
            if policy.kind == "manual":
                h = float(policy.per_group[label] if policy.per_group is not None else policy.h)
            else:
                h, _ = select_bandwidth(
                    sub.x, sub.y, config.cutoff, config.p, config.kernel, config.regularize
                )
            row, var = _ate_engine(sub, config, h, label)
        except (InsufficientObservations, DegenerateScore) as exc:
            warnings_out.append(f"GroupTooSmall: group {label!r} not estimated: {exc}")
            rows.append(_missing_row(label))
            continue
        rows.append(row)
        kept.append(label)
        variances.append(var)
    theta = np.array([r.rbc for r in rows if r.label in kept])
    V = np.diag(variances) if variances else np.zeros((0, 0))
    return RdResult(
        mode="subgroup",
        rows=rows,
        theta_labels=kept,
        theta_hat=theta,
        V_rbc=V,
        config=config,
        joint_fit=False,
        group_labels=list(design.group_labels),
        warnings=warnings_out,
    )


def _subgroup_joint(
    sample: Sample, design: HeterogeneityDesign, config: EstimationConfig
) -> RdResult:
    policy = config.bandwidth
    if policy.kind == "manual":
        h = float(policy.h)
    else:
        h, _ = select_bandwidth(
            sample.x, sample.y, config.cutoff, config.p, config.kernel, config.regularize
        )
    xc = sample.x - config.cutoff
    t = build_treatment(sample.x, config.cutoff)
    conv, rbc = rbc_pair(
        sample.y, xc, t, h, config,
        W=design.W, w_names=list(design.names),
        Z=sample.z_matrix(), z_names=sample.z_names(),
        clusters=sample.cluster,
        subgroup=True,
    )
    rows: list[EffectRow] = []
    kept: list[str] = []
    kept_idx: list[int] = []
    warnings_out: list[str] = []
    for label in design.group_labels:
        name = f"T#{label}"
        if not rbc.design.has(name):
            warnings_out.append(
                f"GroupTooSmall: group {label!r} has no identifying variation in the window"
            )
            rows.append(_missing_row(label))
            continue
        n_left, n_right = _side_counts(rbc.weights, t, design.group_mask(label))
        conv_est = conv.coef(name) if conv.design.has(name) else math.nan
        conv_se = conv.se(name) if conv.design.has(name) else math.nan
        rows.append(
            _make_row(
                label, conv_est, conv_se, rbc.coef(name), rbc.se(name),
                h, n_left, n_right, config.level,
            )
        )
        kept.append(label)
        kept_idx.append(rbc.design.index_of(name))
    theta = rbc.fit.beta[kept_idx]
    V = rbc.vcov[np.ix_(kept_idx, kept_idx)]
    return RdResult(
        mode="subgroup",
        rows=rows,
        theta_labels=kept,
        theta_hat=np.asarray(theta),
        V_rbc=np.asarray(V),
        config=config,
        joint_fit=True,
        group_labels=list(design.group_labels),
        dropped=list(rbc.design.dropped),
        warnings=warnings_out,
    )


def estimate_generic(
    sample: Sample, design: HeterogeneityDesign, config: EstimationConfig
) -> RdResult:
    """Functional-coefficient effects for generic heterogeneity covariates."""
    if design.mode != "generic":
        raise ValueError("estimate_generic requires a generic design")
    bw = resolve_policy(
        config.bandwidth, design, sample, config.cutoff, config.p, config.kernel,
        config.regularize,
    )
    h = float(bw.joint)
    xc = sample.x - config.cutoff
    t = build_treatment(sample.x, config.cutoff)
    conv, rbc = rbc_pair(
        sample.y, xc, t, h, config,
        W=design.W, w_names=list(design.names),
        Z=sample.z_matrix(), z_names=sample.z_names(),
        clusters=sample.cluster,
    )
    n_left, n_right = _side_counts(rbc.weights, t)
    rows = [
        _make_row(
            TREAT_COL,
            conv.coef(TREAT_COL), conv.se(TREAT_COL),
            rbc.coef(TREAT_COL), rbc.se(TREAT_COL),
            h, n_left, n_right, config.level,
        )
    ]
    kept = [TREAT_COL]
    kept_idx = [rbc.design.index_of(TREAT_COL)]
    warnings_out: list[str] = []
    for wname in design.names:
        name = f"T#{wname}"
        if not rbc.design.has(name):
            warnings_out.append(f"row {wname!r} not reported: its column was dropped")
            rows.append(_missing_row(wname))
            continue
        conv_est = conv.coef(name) if conv.design.has(name) else math.nan
        conv_se = conv.se(name) if conv.design.has(name) else math.nan
        rows.append(
            _make_row(
                wname, conv_est, conv_se, rbc.coef(name), rbc.se(name),
                h, n_left, n_right, config.level,
            )
        )
        kept.append(wname)
        kept_idx.append(rbc.design.index_of(name))
    theta = rbc.fit.beta[kept_idx]
    V = rbc.vcov[np.ix_(kept_idx, kept_idx)]
    return RdResult(
        mode="generic",
        rows=rows,
        theta_labels=kept,
        theta_hat=np.asarray(theta),
        V_rbc=np.asarray(V),
        config=config,
        joint_fit=True,
        dropped=list(rbc.design.dropped),
        warnings=warnings_out,
    )


def estimate(
    sample: Sample,
    config: EstimationConfig,
    design: HeterogeneityDesign | None = None,
) -> RdResult:
    """Dispatch on the heterogeneity layout."""
    if design is None:
        return estimate_ate(sample, config)
    if design.mode == "subgroup":
        return estimate_subgroup(sample, design, config)
    return estimate_generic(sample, design, config)


def cate_at(result: RdResult, w) -> tuple[float, float, tuple[float, float]]:
    """Evaluate the estimated effect function at covariate value w.

    The contrast is (1, w')' over the reported generic rows, so the
    estimate is T-row + sum_j w_j * slope_j with the full joint covariance.
    """
    if result.mode != "generic":
        raise ValueError("cate_at applies to generic-mode results")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    d = len(result.theta_labels) - 1
    if w.shape[0] != d:
        raise DimensionMismatch(f"w has {w.shape[0]} entries but the fit kept {d} covariates")
    cvec = np.concatenate([[1.0], w])
    est = float(cvec @ result.theta_hat)
    se = float(np.sqrt(cvec @ result.V_rbc @ cvec))
    zc = _zcrit(result.level)
    return est, se, (est - zc * se, est + zc * se)
