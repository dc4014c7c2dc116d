import numpy as np
import pytest

from rdhetero.errors import NonpositiveBandwidth
from rdhetero.kernels import KERNELS, kernel_value, localization_weights


def test_peak_and_support_values():
    assert kernel_value("triangular", 0.0) == 1.0
    assert kernel_value("uniform", 0.3) == 0.5
    assert kernel_value("epanechnikov", 1.2) == 0.0


def test_vectorized_matches_scalar():
    u = np.linspace(-2, 2, 41)
    for kind in KERNELS:
        vec = kernel_value(kind, u)
        scal = np.array([kernel_value(kind, float(v)) for v in u])
        np.testing.assert_allclose(vec, scal)


def test_nonnegative_and_zero_outside_support():
    u = np.linspace(-3, 3, 301)
    for kind in KERNELS:
        v = kernel_value(kind, u)
        assert (v >= 0).all()
        assert (v[np.abs(u) > 1] == 0).all()


def test_symmetry():
    u = np.linspace(0, 1.5, 50)
    for kind in KERNELS:
        np.testing.assert_array_equal(kernel_value(kind, u), kernel_value(kind, -u))


def test_boundary_point_weights():
    # |x - c| = h: zero for triangular/epanechnikov, 1/2 for uniform
    assert kernel_value("triangular", 1.0) == 0.0
    assert kernel_value("epanechnikov", 1.0) == 0.0
    assert kernel_value("uniform", 1.0) == 0.5


def test_localization_window_membership():
    w = localization_weights("uniform", np.array([-0.05, 0.2]), 0.0, 0.1)
    np.testing.assert_array_equal(w, [0.5, 0.0])
    w = localization_weights("triangular", np.array([0.0]), 0.0, 1.0)
    np.testing.assert_array_equal(w, [1.0])


def test_localization_symmetric_about_cutoff():
    rng = np.random.default_rng(4)
    x = rng.normal(2.0, 1.0, 200)
    for kind in KERNELS:
        a = localization_weights(kind, x, 2.0, 0.7)
        b = localization_weights(kind, 4.0 - x, 2.0, 0.7)
        np.testing.assert_allclose(a, b)


def test_nonpositive_bandwidth_rejected():
    with pytest.raises(NonpositiveBandwidth):
        localization_weights("triangular", np.array([0.0]), 0.0, 0.0)
    with pytest.raises(NonpositiveBandwidth):
        localization_weights("uniform", np.array([0.0]), 0.0, -1.0)


def test_unknown_kernel_rejected():
    with pytest.raises(ValueError):
        kernel_value("gaussian", 0.0)
