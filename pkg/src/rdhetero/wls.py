"""Weighted least squares with heteroskedasticity and cluster robust covariance.

The solver restricts to rows with positive weight (the effective sample),
scales by sqrt(weight), and factors the scaled design by QR.  Leverages
are the diagonal of the weighted hat matrix H = W^{1/2} D (D'WD)^{-1} D' W^{1/2},
read off as squared row norms of Q.  Sandwich meats use scores
w_i * d_i * e~_i, so all estimates and covariances are invariant to
positive rescaling of the weight vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .design import DesignMatrix
from .errors import InsufficientObservations, SingularClusterBlockWarning

VCE_TAGS = ("hc0", "hc1", "hc2", "hc3", "cluster_hc1", "cluster_hc2")


@dataclass(frozen=True)
class VceKind:
    """Variance estimator choice; cluster variants carry the column name."""

    tag: str = "hc3"
    cluster_column: str | None = None

    def __post_init__(self):
        if self.tag not in VCE_TAGS:
            raise ValueError(f"unknown vce tag {self.tag!r}")
        if self.is_cluster and self.cluster_column is None:
            raise ValueError(f"vce {self.tag!r} requires a cluster column")

    @property
    def is_cluster(self) -> bool:
        return self.tag.startswith("cluster")


@dataclass(frozen=True)
class WlsFit:
    """Solved weighted least squares problem on the effective sample.

    ``mask`` flags the positive-weight rows of the original inputs;
    residuals and leverage are aligned with those rows only.
    """

    beta: np.ndarray
    residuals: np.ndarray
    leverage: np.ndarray
    xtx_inv: np.ndarray
    mask: np.ndarray
    n_eff: int
    k: int

    def fitted(self, D: DesignMatrix) -> np.ndarray:
        return D.X[self.mask] @ self.beta


def wls_fit(D: DesignMatrix, weights: np.ndarray, y: np.ndarray) -> WlsFit:
    """Fit y on the design columns under the given localization weights."""
    w = np.asarray(weights, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = w > 0
    n_eff = int(mask.sum())
    k = D.k
    if n_eff < k:
        raise InsufficientObservations(
            f"{n_eff} positive-weight rows but {k} design columns"
        )
    sqw = np.sqrt(w[mask])
    A = D.X[mask] * sqw[:, None]
    b = y[mask] * sqw
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-13 * max(diag.max(), 1.0):
        raise InsufficientObservations(
            "weighted design is numerically rank deficient; drop collinear columns first"
        )
    beta = np.linalg.solve(R, Q.T @ b)
    resid = y[mask] - D.X[mask] @ beta
    leverage = np.einsum("ij,ij->i", Q, Q)
    rinv = np.linalg.solve(R, np.eye(k))
    xtx_inv = rinv @ rinv.T
    return WlsFit(
        beta=beta,
        residuals=resid,
        leverage=leverage,
        xtx_inv=xtx_inv,
        mask=mask,
        n_eff=n_eff,
        k=k,
    )


def _hc_scores(fit: WlsFit, D: np.ndarray, w: np.ndarray, tag: str) -> tuple[np.ndarray, float]:
    e = fit.residuals
    lev = np.clip(fit.leverage, 0.0, 1.0 - 1e-12)
    if tag == "hc0":
        et, scale = e, 1.0
    elif tag == "hc1":
        et, scale = e, fit.n_eff / (fit.n_eff - fit.k)
    elif tag == "hc2":
        et, scale = e / np.sqrt(1.0 - lev), 1.0
    elif tag == "hc3":
        et, scale = e / (1.0 - lev), 1.0
    else:
        raise ValueError(tag)
    return (w * et)[:, None] * D, scale


def sandwich_vcov(
    fit: WlsFit,
    D: DesignMatrix,
    weights: np.ndarray,
    vce: VceKind,
    clusters: np.ndarray | None = None,
) -> np.ndarray:
    """Robust covariance of beta: bread * meat * bread.

    hc0..hc3 adjust individual residuals by leverage; cluster_hc1 sums
    scores within clusters with the usual degrees-of-freedom scale;
    cluster_hc2 applies the Bell-McCaffrey (I - H_gg)^{-1/2} adjustment
    to each cluster's residual block, falling back to the unadjusted
    block (with a warning) when I - H_gg is not invertible.
    """
    w = np.asarray(weights, dtype=float)[fit.mask]
    Deff = D.X[fit.mask]
    bread = fit.xtx_inv

    if not vce.is_cluster:
        U, scale = _hc_scores(fit, Deff, w, vce.tag)
        meat = scale * (U.T @ U)
        return bread @ meat @ bread

    if clusters is None:
        raise ValueError(f"vce {vce.tag!r} needs cluster labels")
    g = np.asarray(clusters)[fit.mask]
    labels = np.unique(g)
    n_g = labels.shape[0]
    if n_g < 2:
        raise InsufficientObservations(
            "cluster-robust variance needs at least 2 clusters in the effective sample"
        )
    e = fit.residuals
    k = fit.k
    meat = np.zeros((k, k))
    if vce.tag == "cluster_hc1":
        for lab in labels:
            rows = g == lab
            s_g = Deff[rows].T @ (w[rows] * e[rows])
            meat += np.outer(s_g, s_g)
        scale = (n_g / (n_g - 1)) * ((fit.n_eff - 1) / (fit.n_eff - k))
        meat *= scale
    elif vce.tag == "cluster_hc2":
        sqw = np.sqrt(w)
        for lab in labels:
            rows = np.flatnonzero(g == lab)
            B = sqw[rows, None] * Deff[rows]
            H_gg = B @ bread @ B.T
            M = np.eye(rows.size) - H_gg
            vals, vecs = np.linalg.eigh(M)
            if vals.min() <= 1e-12:
                warnings.warn(
                    f"cluster {lab!r}: I - H_gg not invertible, using unadjusted residuals",
                    SingularClusterBlockWarning,
                )
                e_g = e[rows]
            else:
                adj = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
                e_g = adj @ e[rows]
            s_g = Deff[rows].T @ (w[rows] * e_g)
            meat += np.outer(s_g, s_g)
    else:
        raise ValueError(vce.tag)
    return bread @ meat @ bread
