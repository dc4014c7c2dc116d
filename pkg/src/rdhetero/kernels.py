# Kernel weighting for local polynomial fits.
# Conventions:
#   u = (x - c) / h
#   weight = K(u), the 1/h factor is dropped on purpose: weighted least
#   squares is invariant to positive rescaling of the weights, so K(u/h)/h
#   and K(u/h) give identical estimates and covariances.

from __future__ import annotations

import numpy as np

from .errors import NonpositiveBandwidth

KERNELS = ("triangular", "uniform", "epanechnikov")


def _check_kernel(kind: str) -> None:
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")


def kernel_value(kind: str, u):
    """Evaluate the kernel at ``u`` (scalar or array).

    triangular:    (1 - |u|) on |u| <= 1
    uniform:       0.5       on |u| <= 1
    epanechnikov:  0.75 (1 - u^2) on |u| <= 1
    """
    _check_kernel(kind)
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    inside = a <= 1.0
    if kind == "triangular":
        out = np.where(inside, 1.0 - a, 0.0)
    elif kind == "uniform":
        out = np.where(inside, 0.5, 0.0)
    else:
        out = np.where(inside, 0.75 * (1.0 - u * u), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def localization_weights(kind: str, x: np.ndarray, c: float, h: float) -> np.ndarray:
    """Kernel weights K((x - c)/h) for every observation.

    Rows with weight zero fall outside the effective sample.  For the
    uniform kernel the window is |x - c| <= h inclusive; the compact
    kernels assign weight zero at |x - c| = h by their formula.
    """
    if not h > 0:
        raise NonpositiveBandwidth(f"bandwidth must be > 0, got {h}")
    x = np.asarray(x, dtype=float)
    return kernel_value(kind, (x - c) / h)
