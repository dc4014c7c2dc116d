"""Simulation presets with known effect functions, plus a coverage harness.

Every preset draws the score uniformly on [-1, 1] with the cutoff at 0 and
has a closed-form kappa(w) = m1(0,w) - m0(0,w), so confidence-interval
coverage can be scored exactly.  The quadratic and high_curvature presets
are polynomial in x of degree two, which the bias-corrected order-2 fit
spans exactly; cubic_hetero is degree three so no fitted order is exact.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import norm

from .data import Sample, classify_heterogeneity, parse_covariate_spec
from .errors import RdheteroError
from .estimator import EstimationConfig, RdResult, estimate, estimate_ate


@dataclass(frozen=True)
class Preset:
    w_kind: str | None  # None | "continuous" | "binary"
    hetero_expr: str | None
    m0: callable
    tau: callable
    truth: dict
    default_noise: float


# m0/tau take (x, w) with w possibly None; truths key the reported row labels
PRESETS: dict[str, Preset] = {
    "linear": Preset(
        w_kind=None,
        hetero_expr=None,
        m0=lambda x, w: 0.4 + 1.1 * x,
        tau=lambda x, w: 0.5 + 0.3 * x,
        truth={"ATE": 0.5},
        default_noise=0.5,
    ),
    "quadratic": Preset(
        w_kind="continuous",
        hetero_expr="c.w",
        m0=lambda x, w: 0.5 + 1.1 * x + 0.6 * x**2 + 0.4 * w + 0.25 * x * w,
        tau=lambda x, w: 0.2 + 0.3 * w + 0.5 * x - 0.85 * x**2 - 0.15 * x * w,
        truth={"T": 0.2, "w": 0.3},
        default_noise=0.5,
    ),
    "high_curvature": Preset(
        w_kind=None,
        hetero_expr=None,
        m0=lambda x, w: 0.5 * x + 2.5 * x**2,
        tau=lambda x, w: 0.5 - 5.0 * x**2,
        truth={"ATE": 0.5},
        default_noise=0.3,
    ),
    "cubic_hetero": Preset(
        w_kind="continuous",
        hetero_expr="c.w",
        m0=lambda x, w: 0.3 + 0.9 * x + 0.4 * x**2 + 0.8 * x**3 + 0.35 * w + 0.2 * x * w,
        tau=lambda x, w: 0.2 + 0.3 * w + 0.4 * x - 0.6 * x**2 + 0.9 * x**3 - 0.1 * x * w,
        truth={"T": 0.2, "w": 0.3},
        default_noise=0.5,
    ),
    "binary_subgroup": Preset(
        w_kind="binary",
        hetero_expr="i.w",
        m0=lambda x, w: 0.2 + 0.8 * x + (1.5 + 2.5 * w) * x**2,
        tau=lambda x, w: 0.021 + 0.068 * w + 0.3 * x - (1.0 + 3.0 * w) * x**2,
        truth={"w=0": 0.021, "w=1": 0.089},
        default_noise=0.4,
    ),
}


@dataclass(frozen=True)
class DgpSpec:
    """One simulated dataset: preset name, size, noise, seed, clustering."""

    name: str
    n: int
    noise_sd: float | None = None
    seed: int | tuple = 0
    n_clusters: int | None = None
    cluster_sd: float = 0.0
    with_z: bool = False

    def preset(self) -> Preset:
        if self.name not in PRESETS:
            raise ValueError(f"unknown preset {self.name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[self.name]


def generate(spec: DgpSpec) -> Sample:
    """Draw one reproducible dataset; treatment follows the cutoff rule only."""
    preset = spec.preset()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    x = rng.uniform(-1.0, 1.0, n)
    if preset.w_kind == "continuous":
        w = rng.uniform(0.0, 1.0, n)
    elif preset.w_kind == "binary":
        w = rng.integers(0, 2, n).astype(float)
    else:
        w = None
    sd = preset.default_noise if spec.noise_sd is None else spec.noise_sd
    t = (x >= 0.0).astype(float)
    y = preset.m0(x, w) + t * preset.tau(x, w) + sd * rng.standard_normal(n)
    cluster = None
    if spec.n_clusters is not None:
        # round-robin labels: G = n degenerates to fully independent data
        cluster = np.arange(n) % spec.n_clusters
        effects = spec.cluster_sd * rng.standard_normal(spec.n_clusters)
        y = y + effects[cluster]
    z_raw = {}
    if spec.with_z:
        z_raw["z"] = 0.4 + 0.5 * x + 0.5 * rng.standard_normal(n)
    w_raw = {} if w is None else {"w": w}
    return Sample(y=y, x=x, w_raw=w_raw, z_raw=z_raw, cluster=cluster)


def to_frame(sample: Sample) -> pd.DataFrame:
    """Tabular view used to write simulated data as CSV."""
    data = {"y": sample.y, "x": sample.x}
    data.update(sample.w_raw)
    data.update(sample.z_raw)
    if sample.cluster is not None:
        data["cluster"] = sample.cluster
    return pd.DataFrame(data)


def _estimate_once(spec: DgpSpec, config: EstimationConfig, rep: int) -> RdResult:
    rep_spec = replace(spec, seed=(spec.seed, rep) if isinstance(spec.seed, int) else (*spec.seed, rep))
    sample = generate(rep_spec)
    expr = spec.preset().hetero_expr
    if expr is None:
        return estimate_ate(sample, config)
    design = classify_heterogeneity(parse_covariate_spec(expr, sample), sample)
    return estimate(sample, config, design)


@dataclass(frozen=True)
class CoverageRow:
    label: str
    truth: float
    coverage: float
    conv_coverage: float
    mean_bias: float
    mean_h: float


@dataclass(frozen=True)
class CoverageReport:
    rows: list[CoverageRow]
    replications: int
    failed: int
    spec: DgpSpec
    notes: list[str] = field(default_factory=list)

    def row(self, label: str) -> CoverageRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def default_workers() -> int:
    env = os.environ.get("RDHETERO_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def coverage_experiment(
    spec: DgpSpec,
    config: EstimationConfig,
    replications: int,
    workers: int | None = None,
) -> CoverageReport:
    """Empirical CI coverage of the known effects over many replications.

    Replications run on worker threads with per-replication derived seeds;
    results are stored by replication index, so aggregation does not
    depend on completion order.  Replications that fail to estimate are
    counted and skipped.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    truth = spec.preset().truth
    zc = float(norm.ppf(0.5 + config.level / 2.0))
    results: list[RdResult | None] = [None] * replications

    def run(rep: int):
        try:
            results[rep] = _estimate_once(spec, config, rep)
        except RdheteroError:
            results[rep] = None

    n_workers = default_workers() if workers is None else max(1, workers)
    if n_workers == 1:
        for rep in range(replications):
            run(rep)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, range(replications)))

    failed = sum(1 for r in results if r is None)
    rows: list[CoverageRow] = []
    for label, true_val in truth.items():
        cover, conv_cover, bias, hs = [], [], [], []
        for res in results:
            if res is None:
                continue
            match = [r for r in res.rows if r.label == label]
            if not match or not np.isfinite(match[0].rbc):
                continue
            row = match[0]
            cover.append(row.ci_low <= true_val <= row.ci_high)
            half = zc * row.conventional_se
            conv_cover.append(
                row.conventional - half <= true_val <= row.conventional + half
            )
            bias.append(row.rbc - true_val)
            hs.append(row.h)
        rows.append(
            CoverageRow(
                label=label,
                truth=true_val,
                coverage=float(np.mean(cover)) if cover else float("nan"),
                conv_coverage=float(np.mean(conv_cover)) if conv_cover else float("nan"),
                mean_bias=float(np.mean(bias)) if bias else float("nan"),
                mean_h=float(np.mean(hs)) if hs else float("nan"),
            )
        )
    return CoverageReport(rows=rows, replications=replications, failed=failed, spec=spec)
