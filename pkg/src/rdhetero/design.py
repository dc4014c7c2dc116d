"""Regression design construction for local polynomial fits.

Columns are assembled in fixed block order:

    alpha   r_p(x)                control-side polynomial
    beta    t * r_p(x)            treatment interactions with the polynomial
    lambda  r_s(x) (x) W          heterogeneity main effects
    xi      t * (r_s(x) (x) W)    heterogeneity treatment interactions
    gamma   Z, Z (x) W            efficiency covariates, no t interaction

where (x) is the Kronecker product with the basis index outer and the W
index inner, and x is the score already centered at the cutoff.  In
subgroup mode W holds one indicator per group; the "1" column of alpha
and the "T" column of beta are omitted (cell-means coding) so the xi
intercept coefficients are the per-group effects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllColumnsDropped, DimensionMismatch, MalformedExpression


@dataclass(frozen=True)
class DesignMatrix:
    """Design columns with names, block tags, and a record of drops."""

    X: np.ndarray
    names: tuple[str, ...]
    blocks: tuple[str, ...]
    dropped: tuple[tuple[str, str], ...] = ()

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def has(self, name: str) -> bool:
        return name in self.names

    def block_indices(self, tag: str) -> list[int]:
        return [j for j, b in enumerate(self.blocks) if b == tag]

    def keep(self, idx: list[int], dropped: list[tuple[str, str]]) -> "DesignMatrix":
        return DesignMatrix(
            X=self.X[:, idx],
            names=tuple(self.names[j] for j in idx),
            blocks=tuple(self.blocks[j] for j in idx),
            dropped=self.dropped + tuple(dropped),
        )


def poly_basis(u, p: int) -> np.ndarray:
    """Monomial basis (1, u, ..., u^p); rows index u when u is a vector."""
    if p < 0:
        raise ValueError("polynomial order must be >= 0")
    u = np.asarray(u, dtype=float)
    exponents = np.arange(p + 1)
    if u.ndim == 0:
        return u ** exponents
    return u[:, None] ** exponents[None, :]


def _power_name(j: int) -> str:
    if j == 0:
        return "1"
    if j == 1:
        return "X"
    return f"X^{j}"


def _xw_name(j: int, wname: str) -> str:
    if j == 0:
        return wname
    return f"{_power_name(j)}#{wname}"


def build_design(
    x: np.ndarray,
    t: np.ndarray,
    p: int,
    s: int,
    W: np.ndarray | None = None,
    w_names: list[str] | None = None,
    Z: np.ndarray | None = None,
    z_names: list[str] | None = None,
    subgroup: bool = False,
) -> DesignMatrix:
    """Assemble the block design on the centered score.

    ``x`` must already be centered at the cutoff.  With W and Z absent the
    result is the canonical 2(p+1)-column two-sided design.  ``subgroup``
    switches on cell-means coding as described in the module docstring.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.shape[0]
    if t.shape[0] != n:
        raise DimensionMismatch("score and treatment lengths differ")
    if W is not None and W.shape[0] != n:
        raise DimensionMismatch("W row count does not match the sample")
    if Z is not None and Z.shape[0] != n:
        raise DimensionMismatch("Z row count does not match the sample")
    if W is not None and w_names is not None and W.shape[1] != len(w_names):
        raise DimensionMismatch("W column names do not match W")
    if Z is not None and z_names is not None and Z.shape[1] != len(z_names):
        raise DimensionMismatch("Z column names do not match Z")

    rp = poly_basis(x, p)
    cols: list[np.ndarray] = []
    names: list[str] = []
    blocks: list[str] = []

    for j in range(p + 1):
        if subgroup and j == 0:
            continue
        cols.append(rp[:, j])
        names.append(_power_name(j))
        blocks.append("alpha")
    for j in range(p + 1):
        if subgroup and j == 0:
            continue
        cols.append(t * rp[:, j])
        names.append("T" if j == 0 else f"T#{_power_name(j)}")
        blocks.append("beta")

    if W is not None and W.shape[1] > 0:
        if w_names is None:
            w_names = [f"w{k}" for k in range(W.shape[1])]
        rs = poly_basis(x, s)
        for j in range(s + 1):
            for k, wname in enumerate(w_names):
                cols.append(rs[:, j] * W[:, k])
                names.append(_xw_name(j, wname))
                blocks.append("lambda")
        for j in range(s + 1):
            for k, wname in enumerate(w_names):
                cols.append(t * rs[:, j] * W[:, k])
                names.append(f"T#{_xw_name(j, wname)}")
                blocks.append("xi")

    if Z is not None and Z.shape[1] > 0:
        if z_names is None:
            z_names = [f"z{k}" for k in range(Z.shape[1])]
        for m, zname in enumerate(z_names):
            cols.append(Z[:, m])
            names.append(zname)
            blocks.append("gamma")
        if W is not None and W.shape[1] > 0:
            for m, zname in enumerate(z_names):
                for k, wname in enumerate(w_names):
                    cols.append(Z[:, m] * W[:, k])
                    names.append(f"{zname}#{wname}")
                    blocks.append("gamma")

    if len(set(names)) != len(names):
        seen = [nm for i, nm in enumerate(names) if nm in names[:i]]
        raise MalformedExpression(f"design column names collide: {sorted(set(seen))}")
    return DesignMatrix(X=np.column_stack(cols), names=tuple(names), blocks=tuple(blocks))


def drop_collinear(D: DesignMatrix, weights: np.ndarray, tol: float = 1e-10) -> DesignMatrix:
    """Remove collinear columns by left-to-right pivoted elimination.

    Columns are sqrt(weight)-scaled; each is projected on the kept
    predecessors (one re-orthogonalization pass for stability) and dropped
    when the residual norm falls at or below tol times its own norm.
    Earlier columns always win, so treatment-effect blocks are never
    sacrificed to later efficiency covariates.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    sqw = np.sqrt(np.asarray(weights, dtype=float))
    A = D.X * sqw[:, None]
    kept: list[int] = []
    dropped: list[tuple[str, str]] = []
    Q = np.empty((A.shape[0], 0))
    for j in range(A.shape[1]):
        col = A[:, j]
        norm0 = np.linalg.norm(col)
        if norm0 == 0.0:
            dropped.append((D.names[j], "zero on effective sample"))
            continue
        r = col - Q @ (Q.T @ col)
        r = r - Q @ (Q.T @ r)
        nr = np.linalg.norm(r)
        if nr <= tol * norm0:
            dropped.append((D.names[j], "collinear with earlier columns"))
            continue
        kept.append(j)
        Q = np.column_stack([Q, r / nr])
    if not kept:
        raise AllColumnsDropped("every design column was dropped as zero or collinear")
    return D.keep(kept, dropped)
