"""Command-line interface: estimation, bandwidth selection, combos, simulation.

Subcommands:

    rdhte     estimate effects (selects bandwidths first when none given)
    rdbwhte   bandwidth selection only
    lincom    linear combinations / joint tests over a saved results file
    simulate  Monte Carlo coverage experiments on the built-in presets

Results persist as version-1 JSON documents; every number shown in a
table is a 4-decimal rendering of the full-precision value in the JSON.
Exit codes: 0 ok, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .bandwidth import BandwidthPolicy, resolve_policy
from .data import ColumnRoles, classify_heterogeneity, load_csv, parse_covariate_spec
from .errors import RdheteroError
from .estimator import EffectRow, EstimationConfig, RdResult, estimate
from .kernels import KERNELS
from .montecarlo import DgpSpec, PRESETS, coverage_experiment
from .posthoc import lincom, parse_combo, wald_test
from .wls import VceKind

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _clean(obj):
    """Make a structure JSON-safe: numpy -> python, non-finite floats -> None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _policy_dict(policy: BandwidthPolicy) -> dict:
    return {
        "kind": policy.kind,
        "h": policy.h,
        "per_group": policy.per_group,
        "joint": policy.joint,
    }


def result_to_dict(result: RdResult, hetero: str | None, covs_eff: list[str]) -> dict:
    cfg = result.config
    doc = {
        "version": SCHEMA_VERSION,
        "mode": result.mode,
        "config": {
            "cutoff": cfg.cutoff,
            "p": cfg.p,
            "s": cfg.s_resolved,
            "kernel": cfg.kernel,
            "vce": cfg.vce.tag,
            "cluster": cfg.vce.cluster_column,
            "level": cfg.level,
            "bandwidth": _policy_dict(cfg.bandwidth),
            "regularize": cfg.regularize,
            "hetero": hetero,
            "covs_eff": covs_eff,
        },
        "joint_fit": result.joint_fit,
        "rows": [
            {
                "label": r.label,
                "conventional": r.conventional,
                "rbc": r.rbc,
                "se": r.se,
                "z": r.z,
                "p": r.p_value,
                "ci": [r.ci_low, r.ci_high],
                "h": r.h,
                "n_left": r.n_left,
                "n_right": r.n_right,
            }
            for r in result.rows
        ],
        "theta_labels": list(result.theta_labels),
        "theta_hat": result.theta_hat,
        "V_rbc": result.V_rbc,
        "group_labels": list(result.group_labels),
        "dropped": [list(d) for d in result.dropped],
        "warnings": list(result.warnings),
    }
    return _clean(doc)


def write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_results(path: str) -> RdResult:
    """Rebuild the estimation state needed by post-estimation commands."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise RdheteroError(
            f"results file has schema version {version!r}; this build reads "
            f"version {SCHEMA_VERSION} (re-run the estimation command)"
        )
    cfg_doc = doc["config"]
    vce = VceKind(cfg_doc["vce"], cfg_doc.get("cluster"))
    bw = cfg_doc["bandwidth"]
    config = EstimationConfig(
        cutoff=cfg_doc["cutoff"],
        p=cfg_doc["p"],
        s=cfg_doc["s"],
        kernel=cfg_doc["kernel"],
        vce=vce,
        level=cfg_doc["level"],
        bandwidth=BandwidthPolicy(
            kind=bw["kind"], h=bw["h"], per_group=bw["per_group"], joint=bw["joint"]
        ),
        regularize=cfg_doc["regularize"],
    )

    def f(v):
        return math.nan if v is None else float(v)

    rows = [
        EffectRow(
            label=r["label"],
            conventional=f(r["conventional"]),
            rbc=f(r["rbc"]),
            se=f(r["se"]),
            z=f(r["z"]),
            p_value=f(r["p"]),
            ci_low=f(r["ci"][0]),
            ci_high=f(r["ci"][1]),
            h=f(r["h"]),
            n_left=r["n_left"],
            n_right=r["n_right"],
        )
        for r in doc["rows"]
    ]
    return RdResult(
        mode=doc["mode"],
        rows=rows,
        theta_labels=list(doc["theta_labels"]),
        theta_hat=np.array([f(v) for v in doc["theta_hat"]], dtype=float),
        V_rbc=np.array(
            [[f(v) for v in row] for row in doc["V_rbc"]], dtype=float
        ).reshape(len(doc["theta_labels"]), len(doc["theta_labels"])),
        config=config,
        joint_fit=doc["joint_fit"],
        group_labels=list(doc["group_labels"]),
        dropped=[tuple(d) for d in doc["dropped"]],
        warnings=list(doc["warnings"]),
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _num(v, width=12) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "." .rjust(width)
    return f"{v:>{width}.4f}"


def _int(v, width=8) -> str:
    return f"{v:>{width}d}"


def render_result(result: RdResult, policy: BandwidthPolicy) -> str:
    cfg = result.config
    lines = []
    vce_txt = cfg.vce.tag + (f"({cfg.vce.cluster_column})" if cfg.vce.cluster_column else "")
    lines.append(
        f"cutoff {cfg.cutoff:g}  kernel {cfg.kernel}  vce {vce_txt}  "
        f"p {cfg.p}  s {cfg.s_resolved}  level {cfg.level * 100:g}%"
    )
    if policy.kind == "manual":
        if policy.per_group is not None:
            txt = ", ".join(f"{k}={v:g}" for k, v in policy.per_group.items())
            lines.append(f"bandwidth manual per group: {txt}")
        else:
            lines.append(f"bandwidth manual h={policy.h:g}" + (" (joint fit)" if policy.joint else ""))
    else:
        lines.append("bandwidth data-driven" + (" (joint fit)" if policy.joint else " (per group)" if result.mode == "subgroup" else ""))
    lines.append(f"mode {result.mode}")
    lines.append("")
    lw = max(12, max((len(r.label) for r in result.rows), default=0))
    head = (
        f"{'effect':<{lw}}{'conventional':>14}{'rbc':>12}{'se':>12}{'z':>12}"
        f"{'P>|z|':>12}{'ci_low':>12}{'ci_high':>12}{'h':>12}{'n_left':>8}{'n_right':>8}"
    )
    lines.append(head)
    lines.append("-" * len(head))
    for r in result.rows:
        lines.append(
            f"{r.label:<{lw}}{_num(r.conventional, 14)}{_num(r.rbc)}{_num(r.se)}"
            f"{_num(r.z)}{_num(r.p_value)}{_num(r.ci_low)}{_num(r.ci_high)}"
            f"{_num(r.h)}{_int(r.n_left)}{_int(r.n_right)}"
        )
    for name, reason in result.dropped:
        lines.append(f"dropped: {name} ({reason})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def parse_vce(text: str) -> VceKind:
    if ":" in text:
        tag, col = text.split(":", 1)
        tag = {"cluster": "cluster_hc1"}.get(tag, tag)
        return VceKind(tag, col)
    return VceKind(text)


def _add_data_flags(p: argparse.ArgumentParser, with_manual_h: bool) -> None:
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--outcome", required=True, help="outcome column")
    p.add_argument("--score", required=True, help="running-variable column")
    p.add_argument("--cutoff", required=True, type=float)
    p.add_argument("--hetero", default=None, help="heterogeneity expression, e.g. 'i.group' or 'c.w'")
    p.add_argument("--covs-eff", default=None, help="comma-separated efficiency covariate columns")
    p.add_argument("--kernel", default="triangular", choices=list(KERNELS))
    p.add_argument("--p", type=int, default=1, help="main polynomial order")
    p.add_argument("--s", type=int, default=None, help="interaction order (default: same as --p)")
    p.add_argument("--vce", default="hc3",
                   help="hc0|hc1|hc2|hc3|cluster:COL|cluster_hc2:COL (default hc3)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--bwjoint", action="store_true",
                   help="one pooled bandwidth (and one saturated fit in subgroup mode)")
    p.add_argument("--no-regularization", action="store_true",
                   help="disable the bandwidth-selection regularization term")
    p.add_argument("--out", default=None, help="write results JSON here")
    if with_manual_h:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--h", type=float, default=None, help="manual bandwidth for every fit")
        g.add_argument("--h-per-group", default=None,
                       help="comma-separated LABEL=H manual bandwidths (subgroup mode)")


def _build_setup(args, parser: argparse.ArgumentParser):
    """Shared rdhte/rdbwhte setup: load data, classify design, build config."""
    try:
        vce = parse_vce(args.vce)
    except ValueError as exc:
        parser.error(str(exc))
    if args.level is not None and not 0.0 < args.level < 1.0:
        parser.error("--level must be in (0, 1)")
    if args.p < 0 or (args.s is not None and args.s < 0):
        parser.error("polynomial orders must be >= 0")
    manual_h = getattr(args, "h", None)
    per_group_raw = getattr(args, "h_per_group", None)
    if manual_h is not None and manual_h <= 0:
        parser.error("--h must be positive")
    per_group = None
    if per_group_raw is not None:
        per_group = {}
        for item in per_group_raw.split(","):
            if "=" not in item:
                parser.error(f"--h-per-group entry {item!r} is not LABEL=H")
            label, value = item.rsplit("=", 1)
            try:
                per_group[label] = float(value)
            except ValueError:
                parser.error(f"--h-per-group value {value!r} is not a number")
            if per_group[label] <= 0:
                parser.error("--h-per-group bandwidths must be positive")
        if args.bwjoint:
            parser.error("--h-per-group cannot be combined with --bwjoint")

    covs_eff = [c for c in (args.covs_eff or "").split(",") if c]
    roles = ColumnRoles(
        outcome=args.outcome,
        score=args.score,
        hetero=_hetero_columns(args.hetero),
        efficiency=tuple(covs_eff),
        cluster=vce.cluster_column,
    )
    sample = load_csv(args.data, roles)
    design = None
    if args.hetero is not None:
        design = classify_heterogeneity(parse_covariate_spec(args.hetero, sample), sample)
    if manual_h is not None or per_group is not None:
        policy = BandwidthPolicy(kind="manual", h=manual_h, per_group=per_group, joint=args.bwjoint)
    else:
        policy = BandwidthPolicy(kind="auto", joint=args.bwjoint)
    config = EstimationConfig(
        cutoff=args.cutoff,
        p=args.p,
        s=args.s,
        kernel=args.kernel,
        vce=vce,
        level=args.level,
        bandwidth=policy,
        regularize=not args.no_regularization,
    )
    return sample, design, config, covs_eff


def _hetero_columns(expr: str | None) -> tuple[str, ...]:
    """Column names referenced by a heterogeneity expression, for loading."""
    if expr is None:
        return ()
    names = []
    for token in expr.split():
        for part in token.replace("##", "#").split("#"):
            name = part[2:] if part[:2] in ("i.", "c.") else part
            if name and name not in names:
                names.append(name)
    return tuple(names)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_rdhte(args, parser) -> int:
    sample, design, config, covs_eff = _build_setup(args, parser)
    result = estimate(sample, config, design)
    print(render_result(result, config.bandwidth))
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.out:
        write_json(args.out, result_to_dict(result, args.hetero, covs_eff))
    return 0


def cmd_rdbwhte(args, parser) -> int:
    sample, design, config, covs_eff = _build_setup(args, parser)
    bw = resolve_policy(
        config.bandwidth, design, sample, config.cutoff, config.p, config.kernel,
        config.regularize,
    )
    lines = [
        f"cutoff {config.cutoff:g}  kernel {config.kernel}  p {config.p}",
        "",
        f"{'group':<14}{'h':>12}{'h_pilot':>12}{'B_hat':>12}{'V_hat':>12}{'n_eff':>8}",
    ]
    lines.append("-" * len(lines[-1]))
    doc_groups = {}
    if bw.per_group is not None:
        items = [(label, bw.per_group[label]) for label in bw.per_group]
    else:
        items = [("joint", bw.joint)]
    for label, h in items:
        diag = bw.diagnostics.get(label, {})
        lines.append(
            f"{label:<14}{_num(h)}{_num(diag.get('h_pilot'))}"
            f"{_num(diag.get('B_hat'))}{_num(diag.get('V_hat'))}"
            f"{_int(diag.get('n_eff', 0))}"
        )
        doc_groups[label] = h
    print("\n".join(lines))
    if args.out:
        doc = _clean({
            "version": SCHEMA_VERSION,
            "kind": "bandwidths",
            "per_group": bw.per_group,
            "joint": bw.joint,
            "diagnostics": bw.diagnostics,
        })
        write_json(args.out, doc)
    return 0


def cmd_lincom(args, parser) -> int:
    result = read_results(args.results)
    combos = [parse_combo(expr, result) for expr in args.combo]
    lw = max(10, max(len(e) for e in args.combo))
    lines = [
        f"{'combo':<{lw}}{'estimate':>12}{'se':>12}{'z':>12}{'P>|z|':>12}{'ci_low':>12}{'ci_high':>12}"
    ]
    lines.append("-" * len(lines[0]))
    rows_doc = []
    for expr, combo in zip(args.combo, combos):
        res = lincom(result, combo)
        lines.append(
            f"{expr:<{lw}}{_num(res.estimate)}{_num(res.se)}{_num(res.z)}"
            f"{_num(res.p_value)}{_num(res.ci_low)}{_num(res.ci_high)}"
        )
        rows_doc.append({
            "combo": expr,
            "estimate": res.estimate,
            "se": res.se,
            "z": res.z,
            "p": res.p_value,
            "ci": [res.ci_low, res.ci_high],
        })
    doc = {"version": SCHEMA_VERSION, "kind": "lincom", "rows": rows_doc}
    if args.joint:
        wr = wald_test(result, combos)
        lines.append("")
        lines.append(f"joint test: chi2 {wr.chi2:.4f}  df {wr.df}  P {wr.p_value:.4f}")
        for i in wr.dropped:
            lines.append(f"dropped dependent combo: {args.combo[i]}")
        doc["joint"] = {
            "chi2": wr.chi2,
            "df": wr.df,
            "p": wr.p_value,
            "dropped": list(wr.dropped),
        }
    print("\n".join(lines))
    if args.out:
        write_json(args.out, _clean(doc))
    return 0


def cmd_simulate(args, parser) -> int:
    if args.reps < 1:
        parser.error("--reps must be >= 1")
    spec = DgpSpec(
        name=args.dgp,
        n=args.n,
        noise_sd=args.noise_sd,
        seed=args.seed,
        n_clusters=args.clusters,
        cluster_sd=args.cluster_sd,
        with_z=args.with_z,
    )
    try:
        vce = parse_vce(args.vce)
    except ValueError as exc:
        parser.error(str(exc))
    if args.h is not None and args.h <= 0:
        parser.error("--h must be positive")
    policy = (
        BandwidthPolicy(kind="manual", h=args.h)
        if args.h is not None
        else BandwidthPolicy(kind="auto")
    )
    config = EstimationConfig(
        cutoff=0.0, p=args.p, kernel=args.kernel, vce=vce, level=args.level,
        bandwidth=policy,
    )
    report = coverage_experiment(spec, config, args.reps, workers=args.workers)
    lines = [
        f"dgp {args.dgp}  n {args.n}  reps {args.reps}  seed {args.seed}  "
        f"failed {report.failed}",
        "",
        f"{'effect':<12}{'truth':>10}{'coverage':>10}{'conv_cov':>10}{'mean_bias':>12}{'mean_h':>10}",
    ]
    lines.append("-" * len(lines[-1]))
    for r in report.rows:
        lines.append(
            f"{r.label:<12}{_num(r.truth, 10)}{_num(r.coverage, 10)}{_num(r.conv_coverage, 10)}"
            f"{_num(r.mean_bias, 12)}{_num(r.mean_h, 10)}"
        )
    print("\n".join(lines))
    if args.out:
        doc = _clean({
            "version": SCHEMA_VERSION,
            "kind": "simulation",
            "dgp": args.dgp,
            "n": args.n,
            "replications": args.reps,
            "seed": args.seed,
            "failed": report.failed,
            "rows": [
                {
                    "label": r.label,
                    "truth": r.truth,
                    "coverage": r.coverage,
                    "conv_coverage": r.conv_coverage,
                    "mean_bias": r.mean_bias,
                    "mean_h": r.mean_h,
                }
                for r in report.rows
            ],
        })
        write_json(args.out, doc)
    return 0


# ---------------------------------------------------------------------------
# entry
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdhetero",
        description="Heterogeneous treatment effects in sharp regression discontinuity designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("rdhte", help="estimate effects with robust bias-corrected inference")
    _add_data_flags(p_est, with_manual_h=True)
    p_est.set_defaults(func=cmd_rdhte)

    p_bw = sub.add_parser("rdbwhte", help="data-driven bandwidth selection")
    _add_data_flags(p_bw, with_manual_h=False)
    p_bw.set_defaults(func=cmd_rdbwhte)

    p_lc = sub.add_parser("lincom", help="linear combinations of estimated effects")
    p_lc.add_argument("--results", required=True, help="JSON file written by rdhte --out")
    p_lc.add_argument("--combo", action="append", required=True,
                      help="expression over row labels, e.g. 'w=1 - w=0' (repeatable)")
    p_lc.add_argument("--joint", action="store_true", help="joint Wald test over all combos")
    p_lc.add_argument("--out", default=None, help="write combo results JSON here")
    p_lc.set_defaults(func=cmd_lincom)

    p_sim = sub.add_parser("simulate", help="Monte Carlo coverage experiment")
    p_sim.add_argument("--dgp", required=True, choices=sorted(PRESETS))
    p_sim.add_argument("--n", type=int, default=2000)
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--noise-sd", type=float, default=None)
    p_sim.add_argument("--clusters", type=int, default=None)
    p_sim.add_argument("--cluster-sd", type=float, default=0.0)
    p_sim.add_argument("--with-z", action="store_true")
    p_sim.add_argument("--p", type=int, default=1)
    p_sim.add_argument("--kernel", default="triangular", choices=list(KERNELS))
    p_sim.add_argument("--vce", default="hc3")
    p_sim.add_argument("--level", type=float, default=0.95)
    p_sim.add_argument("--h", type=float, default=None, help="manual bandwidth")
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except RdheteroError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())
