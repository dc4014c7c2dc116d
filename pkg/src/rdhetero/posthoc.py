"""Post-estimation linear combinations and joint Wald tests.

Combos are written over the reported row labels, e.g. "w=1 - w=0" or
"0.5*A + 0.5*B".  Labels may contain characters that look like operators
('-', '=', '#'), so parsing first substitutes every known label with a
placeholder and only then reads the arithmetic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm

from .errors import (
    EmptyCombo,
    SingularContrastCovariance,
    UnknownLabel,
)
from .estimator import RdResult, _zcrit

_TERM = re.compile(
    r"\s*(?P<sign>[+-])?\s*"
    r"(?:(?P<coef>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*\*?\s*)?"
    r"\x00(?P<idx>\d+)\x00"
)


@dataclass(frozen=True)
class LinearCombo:
    """Signed terms over result row labels."""

    terms: tuple[tuple[float, str], ...]

    def vector(self, labels: list[str]) -> np.ndarray:
        c = np.zeros(len(labels))
        for coef, label in self.terms:
            c[labels.index(label)] += coef
        return c


@dataclass(frozen=True)
class LincomResult:
    estimate: float
    se: float
    z: float
    p_value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class WaldResult:
    chi2: float
    df: int
    p_value: float
    dropped: tuple[int, ...] = ()


def parse_combo(expr: str, result: RdResult) -> LinearCombo:
    """Parse a linear-combination expression against a result's labels."""
    labels = result.theta_labels
    work = expr
    for i in sorted(range(len(labels)), key=lambda j: -len(labels[j])):
        work = work.replace(labels[i], f"\x00{i}\x00")

    terms: list[tuple[float, str]] = []
    pos = 0
    first = True
    while pos < len(work):
        m = _TERM.match(work, pos)
        if m is None:
            break
        if not first and m.group("sign") is None:
            break
        sign = -1.0 if m.group("sign") == "-" else 1.0
        coef = float(m.group("coef")) if m.group("coef") is not None else 1.0
        terms.append((sign * coef, labels[int(m.group("idx"))]))
        pos = m.end()
        first = False
    rest = work[pos:].strip()
    if rest:
        shown = rest.replace("\x00", "")
        raise UnknownLabel(
            f"cannot resolve {shown!r} in combo {expr!r}; available labels: {labels}"
        )
    if not terms:
        raise EmptyCombo(f"no terms found in combo {expr!r}")
    if all(coef == 0.0 for coef, _ in terms):
        raise EmptyCombo(f"all coefficients are zero in combo {expr!r}")
    return LinearCombo(terms=tuple(terms))


def lincom(result: RdResult, combo: LinearCombo) -> LincomResult:
    """Point estimate and robust inference for one linear combination."""
    c = combo.vector(result.theta_labels)
    est = float(c @ result.theta_hat)
    var = float(c @ result.V_rbc @ c)
    se = float(np.sqrt(max(var, 0.0)))
    if se > 0:
        z = est / se
        p = float(2.0 * norm.sf(abs(z)))
    else:
        z, p = float("nan"), float("nan")
    zc = _zcrit(result.level)
    return LincomResult(est, se, z, p, est - zc * se, est + zc * se)


def wald_test(result: RdResult, combos: list[LinearCombo]) -> WaldResult:
    """Joint chi-square test that all combinations are zero.

    Linearly dependent contrast rows are removed (their indices are
    returned in ``dropped``) so the covariance of the retained rows can be
    inverted; df is the rank of the contrast matrix.
    """
    if not combos:
        raise EmptyCombo("joint test needs at least one combo")
    R_all = np.array([cb.vector(result.theta_labels) for cb in combos])
    kept: list[int] = []
    dropped: list[int] = []
    basis = np.empty((0, R_all.shape[1]))
    for i, row in enumerate(R_all):
        r = row - basis.T @ (basis @ row)
        r = r - basis.T @ (basis @ r)
        if np.linalg.norm(r) <= 1e-10 * max(np.linalg.norm(row), 1.0):
            dropped.append(i)
            continue
        kept.append(i)
        basis = np.vstack([basis, r / np.linalg.norm(r)])
    R = R_all[kept]
    r_theta = R @ result.theta_hat
    cov = R @ result.V_rbc @ R.T
    try:
        sol = np.linalg.solve(cov, r_theta)
    except np.linalg.LinAlgError:
        raise SingularContrastCovariance(
            "contrast covariance is singular; effects may be perfectly dependent"
        ) from None
    if not np.all(np.isfinite(sol)):
        raise SingularContrastCovariance("contrast covariance is not invertible")
    stat = float(r_theta @ sol)
    df = len(kept)
    p = float(chi2_dist.sf(stat, df))
    return WaldResult(chi2=stat, df=df, p_value=p, dropped=tuple(dropped))
