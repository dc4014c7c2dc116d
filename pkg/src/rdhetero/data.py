"""Input data handling: CSV loading, covariate expressions, design classification.

Covariate expressions use a small factor-variable grammar:

    i.NAME      treat NAME as a factor (one indicator per observed level)
    c.NAME      treat NAME as continuous
    A#B         product of two terms (indicator products for factors)
    A##B        full interaction: A, B and A#B
    bare NAME   factor when the column holds only values in {0, 1},
                continuous otherwise

Terms are separated by whitespace.  Factor levels are ordered ascending
(numeric value first, then lexicographic for strings) so expansions are
deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    EmptyAfterDeletion,
    MalformedExpression,
    MissingColumn,
    NonNumericScore,
    UnknownColumn,
)

MISSING_TOKENS = ("", "NA")

#: label used for the residual subgroup when the expanded indicators leave
#: some rows in no group
OMITTED_LABEL = "(omitted)"

#: design-internal names; covariates may not shadow them
RESERVED_NAMES = ("T", "X")


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns play which role in an invocation."""

    outcome: str
    score: str
    hetero: tuple[str, ...] = ()
    efficiency: tuple[str, ...] = ()
    cluster: str | None = None

    def used_columns(self) -> list[str]:
        cols = [self.outcome, self.score, *self.hetero, *self.efficiency]
        if self.cluster is not None:
            cols.append(self.cluster)
        # preserve order, drop duplicates
        return list(dict.fromkeys(cols))


@dataclass(frozen=True)
class Sample:
    """Retained rows of one analysis: outcome, score, raw covariates.

    ``w_raw`` and ``z_raw`` map column name to the raw column (float array
    for numeric columns, object array of strings otherwise).  Rows with a
    missing value in any used column were dropped listwise;
    ``rows_dropped`` counts them.
    """

    y: np.ndarray
    x: np.ndarray
    w_raw: dict[str, np.ndarray] = field(default_factory=dict)
    z_raw: dict[str, np.ndarray] = field(default_factory=dict)
    cluster: np.ndarray | None = None
    rows_dropped: int = 0

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def z_matrix(self) -> np.ndarray | None:
        """Efficiency covariates as an n x d_z float matrix, or None."""
        if not self.z_raw:
            return None
        return np.column_stack([self.z_raw[name] for name in self.z_raw])

    def z_names(self) -> list[str]:
        return list(self.z_raw)

    def subset(self, mask: np.ndarray) -> "Sample":
        """Row-subset view used for per-group estimation."""
        return Sample(
            y=self.y[mask],
            x=self.x[mask],
            w_raw={k: v[mask] for k, v in self.w_raw.items()},
            z_raw={k: v[mask] for k, v in self.z_raw.items()},
            cluster=None if self.cluster is None else self.cluster[mask],
            rows_dropped=self.rows_dropped,
        )


def _is_missing(values: np.ndarray) -> np.ndarray:
    return np.isin(values, MISSING_TOKENS)


def _strict_float(values: np.ndarray, column: str, what: str) -> np.ndarray:
    try:
        return values.astype(float)
    except ValueError as exc:
        raise NonNumericScore(f"{what} column {column!r} is not numeric: {exc}") from None


def _maybe_float(values: np.ndarray) -> np.ndarray:
    """Cast to float when every entry parses, else keep strings."""
    try:
        return values.astype(float)
    except ValueError:
        return values.copy()


def load_csv(path, roles: ColumnRoles) -> Sample:
    """Read a CSV (header row, UTF-8) and apply listwise deletion.

    Missing values are empty fields or the literal ``NA``.  Deletion
    considers exactly the columns named in ``roles``.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    for col in roles.used_columns():
        if col not in frame.columns:
            raise MissingColumn(f"column {col!r} not found in {path}")

    used = roles.used_columns()
    raw = {col: frame[col].to_numpy(dtype=object) for col in used}
    n_total = len(frame)
    keep = np.ones(n_total, dtype=bool)
    for col in used:
        keep &= ~_is_missing(raw[col])
    rows_dropped = int(n_total - keep.sum())
    if keep.sum() == 0:
        raise EmptyAfterDeletion(
            f"no rows remain after listwise deletion over {used} ({n_total} read)"
        )

    y = _strict_float(raw[roles.outcome][keep], roles.outcome, "outcome")
    x = _strict_float(raw[roles.score][keep], roles.score, "score")
    w_raw = {c: _maybe_float(raw[c][keep]) for c in roles.hetero}
    z_raw = {c: _strict_float(raw[c][keep], c, "efficiency") for c in roles.efficiency}

    cluster = None
    if roles.cluster is not None:
        labels = raw[roles.cluster][keep]
        _, cluster = np.unique(labels.astype(str), return_inverse=True)

    return Sample(y=y, x=x, w_raw=w_raw, z_raw=z_raw, cluster=cluster, rows_dropped=rows_dropped)


def build_treatment(x: np.ndarray, c: float) -> np.ndarray:
    """Assignment indicator: 1 where x >= c (the cutoff itself is treated)."""
    return (np.asarray(x, dtype=float) >= c).astype(float)


# ---------------------------------------------------------------------------
# covariate expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """One variable reference inside a term: a factor or a continuous column."""

    name: str
    kind: str  # "factor" | "continuous"


@dataclass(frozen=True)
class Term:
    """A product of atoms; a single atom is a main-effect term."""

    atoms: tuple[Atom, ...]

    @property
    def order(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class CovariateSpec:
    """Parsed heterogeneity expression bound to a sample.

    ``levels`` maps each factor column to its observed levels in expansion
    order.  ``expand`` materializes indicator/product columns; with
    ``drop_first`` each factor omits its first level so the expansion is
    full rank next to an intercept.
    """

    terms: tuple[Term, ...]
    levels: dict[str, tuple] = field(default_factory=dict)

    @property
    def expanded_names(self) -> list[str]:
        names, _ = self._expansion_shape()
        return names

    def _expansion_shape(self) -> tuple[list[str], None]:
        names = []
        for term in self.terms:
            names.extend(name for name, _ in self._term_columns_meta(term, drop_first=False))
        return names, None

    def _atom_columns_meta(self, atom: Atom, drop_first: bool):
        if atom.kind == "continuous":
            return [(atom.name, None)]
        levels = self.levels[atom.name]
        if drop_first:
            levels = levels[1:]
        return [(f"{atom.name}={_format_level(lv)}", lv) for lv in levels]

    def _term_columns_meta(self, term: Term, drop_first: bool):
        metas = [self._atom_columns_meta(a, drop_first) for a in term.atoms]
        combos = [[]]
        for block in metas:
            combos = [prev + [entry] for prev in combos for entry in block]
        out = []
        for combo in combos:
            name = "#".join(part for part, _ in combo)
            out.append((name, combo))
        return out

    def expand(self, sample: Sample, drop_first: bool) -> tuple[list[str], np.ndarray]:
        """Build the expanded covariate matrix and its column names."""
        columns: list[np.ndarray] = []
        names: list[str] = []
        for term in self.terms:
            for name, combo in self._term_columns_meta(term, drop_first):
                col = np.ones(sample.n, dtype=float)
                for atom, (_, level) in zip(term.atoms, combo):
                    values = sample.w_raw[atom.name]
                    if atom.kind == "continuous":
                        col = col * values.astype(float)
                    else:
                        col = col * (values == level).astype(float)
                if name in names:
                    raise MalformedExpression(f"duplicate expanded column {name!r}")
                names.append(name)
                columns.append(col)
        matrix = np.column_stack(columns) if columns else np.empty((sample.n, 0))
        return names, matrix


def _format_level(level) -> str:
    if isinstance(level, float) and level == int(level):
        return str(int(level))
    return str(level)


def _column_levels(values: np.ndarray):
    """Observed levels, ascending numeric first, then lexicographic strings."""
    if values.dtype.kind == "f":
        return tuple(np.unique(values))
    uniq = sorted(set(values.tolist()))
    numeric, strings = [], []
    for v in uniq:
        try:
            numeric.append(float(v))
        except (TypeError, ValueError):
            strings.append(str(v))
    return tuple(sorted(numeric) + sorted(strings))


def _is_binary01(values: np.ndarray) -> bool:
    if values.dtype.kind != "f":
        return False
    uniq = np.unique(values)
    return uniq.size <= 2 and bool(np.isin(uniq, (0.0, 1.0)).all())


def _parse_atom(token: str, sample: Sample) -> Atom:
    kind = None
    name = token
    if token.startswith("i."):
        kind, name = "factor", token[2:]
    elif token.startswith("c."):
        kind, name = "continuous", token[2:]
    if not name:
        raise MalformedExpression(f"empty variable name in {token!r}")
    if name in RESERVED_NAMES:
        raise MalformedExpression(f"{name!r} is reserved for design columns")
    if name not in sample.w_raw:
        raise UnknownColumn(f"unknown heterogeneity column {name!r}")
    values = sample.w_raw[name]
    if kind is None:
        kind = "factor" if _is_binary01(values) else "continuous"
    if kind == "continuous" and values.dtype.kind != "f":
        raise MalformedExpression(f"column {name!r} is not numeric; use i.{name}")
    return Atom(name=name, kind=kind)


def _parse_product(text: str, sample: Sample) -> Term:
    parts = text.split("#")
    if any(p == "" for p in parts):
        raise MalformedExpression(f"malformed term {text!r}")
    atoms = tuple(_parse_atom(p, sample) for p in parts)
    if len({a.name for a in atoms}) != len(atoms):
        raise MalformedExpression(f"repeated variable inside term {text!r}")
    return Term(atoms=atoms)


def parse_covariate_spec(expr: str, sample: Sample) -> CovariateSpec:
    """Parse a heterogeneity expression against a sample.

    ``A##B`` expands to the terms A, B, A#B in that order; ``#`` alone is
    the product.  Expansion order inside a term is lexicographic over the
    constituent level indices, first constituent outermost.
    """
    tokens = expr.split()
    if not tokens:
        raise MalformedExpression("empty covariate expression")
    terms: list[Term] = []
    for token in tokens:
        if "##" in token:
            sides = token.split("##")
            if len(sides) != 2 or not sides[0] or not sides[1]:
                raise MalformedExpression(f"malformed interaction {token!r}")
            left = _parse_product(sides[0], sample)
            right = _parse_product(sides[1], sample)
            product = Term(atoms=left.atoms + right.atoms)
            if len({a.name for a in product.atoms}) != len(product.atoms):
                raise MalformedExpression(f"repeated variable inside term {token!r}")
            terms.extend([left, right, product])
        else:
            terms.append(_parse_product(token, sample))

    levels: dict[str, tuple] = {}
    for term in terms:
        for atom in term.atoms:
            if atom.kind == "factor" and atom.name not in levels:
                levels[atom.name] = _column_levels(sample.w_raw[atom.name])
    spec = CovariateSpec(terms=tuple(terms), levels=levels)
    # surfaces duplicate-name errors eagerly
    spec.expand(sample, drop_first=False)
    return spec


# ---------------------------------------------------------------------------
# heterogeneity classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeterogeneityDesign:
    """Expanded heterogeneity covariates plus their estimation mode.

    Subgroup mode means the columns are binary with at most one 1 per row:
    they split the sample into disjoint groups (a residual ``(omitted)``
    column is appended when some rows fall in no group, so the groups
    always partition the sample).  Anything else is Generic mode, where
    factors are expanded against a baseline level and the design module
    supplies the intercept.
    """

    mode: str  # "subgroup" | "generic"
    W: np.ndarray
    names: list[str]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def group_labels(self) -> list[str]:
        if self.mode != "subgroup":
            raise ValueError("group labels only exist in subgroup mode")
        return list(self.names)

    def group_mask(self, label: str) -> np.ndarray:
        j = self.names.index(label)
        return self.W[:, j] == 1.0


def classify_heterogeneity(spec: CovariateSpec, sample: Sample) -> HeterogeneityDesign:
    """Decide between subgroup and generic estimation for an expression.

    The fully expanded matrix is inspected: binary entries with row sums
    at most one mean the columns are mutually exclusive indicators, and
    estimation proceeds group by group.  Otherwise the generic
    functional-coefficient path is used with baseline-coded factors.
    """
    names, W = spec.expand(sample, drop_first=False)
    binary = np.isin(W, (0.0, 1.0)).all()
    if binary and W.shape[1] > 0 and (W.sum(axis=1) <= 1.0).all():
        row_sums = W.sum(axis=1)
        if (row_sums == 0).any():
            omitted = (row_sums == 0).astype(float)
            W = np.column_stack([W, omitted])
            names = names + [OMITTED_LABEL]
        return HeterogeneityDesign(mode="subgroup", W=W, names=names)
    names, W = spec.expand(sample, drop_first=True)
    return HeterogeneityDesign(mode="generic", W=W, names=names)
