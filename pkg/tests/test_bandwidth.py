import numpy as np
import pytest
from scipy import integrate

from rdhetero.bandwidth import (
    BandwidthPolicy,
    boundary_constants,
    kernel_moment,
    kernel_sq_moment,
    plugin_h,
    resolve_policy,
    select_bandwidth,
)
from rdhetero.data import HeterogeneityDesign, Sample
from rdhetero.errors import (
    DegenerateScore,
    InsufficientObservations,
    NonpositiveBandwidth,
)
from rdhetero.kernels import KERNELS, kernel_value


@pytest.mark.parametrize("kind", KERNELS)
@pytest.mark.parametrize("j", range(7))
def test_moments_match_quadrature(kind, j):
    mu, _ = integrate.quad(lambda u: u**j * kernel_value(kind, u), 0, 1)
    nu, _ = integrate.quad(lambda u: u**j * kernel_value(kind, u) ** 2, 0, 1)
    assert kernel_moment(kind, j) == pytest.approx(mu, abs=1e-12)
    assert kernel_sq_moment(kind, j) == pytest.approx(nu, abs=1e-12)


def test_triangular_local_linear_constants():
    c_b, c_v = boundary_constants("triangular", 1)
    assert c_b == pytest.approx(-0.1, abs=1e-12)
    assert c_v == pytest.approx(4.8, abs=1e-12)


def test_constants_defined_for_all_kernels_and_orders():
    for kind in KERNELS:
        for p in range(4):
            c_b, c_v = boundary_constants(kind, p)
            assert np.isfinite(c_b)
            assert c_v > 0


def test_plugin_formula():
    v, b2, n, p = 3.0, 0.5, 1000, 1
    h = plugin_h(v, b2, n, p)
    assert h == pytest.approx((v / (2 * (p + 1) * b2 * n)) ** (1 / (2 * p + 3)))


def test_plugin_monotonicity():
    hs = [plugin_h(v, 0.5, 500, 1) for v in (0.5, 1.0, 2.0, 4.0)]
    assert hs == sorted(hs)
    hs_b = [plugin_h(1.0, b2, 500, 1) for b2 in (0.1, 0.5, 2.0)]
    assert hs_b == sorted(hs_b, reverse=True)


def test_plugin_degenerate_denominator():
    assert plugin_h(1.0, 0.0, 100, 1) == np.inf
    assert plugin_h(1.0, -1.0, 100, 1) == np.inf


def simulated(n=800, seed=3, curvature=0.0, noise=0.3):
    # curvature enters one side only: two-sided symmetric curvature cancels
    # out of the jump bias and leaves the selector untouched
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    y = 0.5 * (x >= 0) + 0.4 * x + curvature * x**2 * (x >= 0) + rng.normal(0, noise, n)
    return x, y


class TestSelect:
    def test_in_range(self):
        x, y = simulated()
        h, diag = select_bandwidth(x, y, 0.0, 1, "triangular")
        assert 0 < h <= np.abs(x).max()
        assert diag["h_pilot"] > 0
        assert diag["n_eff"] > 0

    def test_deterministic(self):
        x, y = simulated()
        h1, d1 = select_bandwidth(x, y, 0.0, 1, "triangular")
        h2, d2 = select_bandwidth(x, y, 0.0, 1, "triangular")
        assert h1 == h2
        assert d1 == d2

    def test_translation_invariance(self):
        x, y = simulated()
        h0, _ = select_bandwidth(x, y, 0.0, 1, "triangular")
        h1, _ = select_bandwidth(x + 3.5, y, 3.5, 1, "triangular")
        assert h1 == pytest.approx(h0, rel=1e-8)

    def test_scale_equivariance(self):
        x, y = simulated()
        h0, _ = select_bandwidth(x, y, 0.0, 1, "triangular")
        a = 12.0
        h1, _ = select_bandwidth(a * x, y, 0.0, 1, "triangular")
        assert h1 == pytest.approx(a * h0, rel=1e-8)

    def test_curvature_shrinks_bandwidth(self):
        # low noise keeps the pilot curvature estimates close to truth
        x, y_flat = simulated(curvature=0.0, noise=0.05)
        _, y_curved = simulated(curvature=8.0, noise=0.05)
        h_flat, _ = select_bandwidth(x, y_flat, 0.0, 1, "triangular")
        h_curved, _ = select_bandwidth(x, y_curved, 0.0, 1, "triangular")
        assert h_curved < h_flat

    def test_regularization_off_gives_larger_h(self):
        x, y = simulated()
        h_reg, _ = select_bandwidth(x, y, 0.0, 1, "triangular", regularize=True)
        h_raw, _ = select_bandwidth(x, y, 0.0, 1, "triangular", regularize=False)
        assert h_raw >= h_reg

    def test_degenerate_score(self):
        with pytest.raises(DegenerateScore):
            select_bandwidth(np.full(50, 2.0), np.zeros(50), 0.0, 1, "triangular")

    def test_too_few_distinct_per_side(self):
        # right side has only 3 distinct scores, need p + 3 = 4
        x = np.concatenate([np.linspace(-1, -0.1, 30), [0.1, 0.2, 0.3] * 5])
        y = np.zeros_like(x)
        with pytest.raises(InsufficientObservations):
            select_bandwidth(x, y, 0.0, 1, "triangular")


def subgroup_fixture(n=900, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    g = (rng.uniform(size=n) < 0.5).astype(float)
    # group 1 has strong one-sided curvature, group 0 is linear; the
    # curvature must clear the pilot noise floor to move the selector
    y = 0.3 * (x >= 0) + 0.5 * x + g * 30.0 * x**2 * (x >= 0) + rng.normal(0, 0.05, n)
    sample = Sample(y=y, x=x, w_raw={"g": g})
    design = HeterogeneityDesign(
        mode="subgroup", W=np.column_stack([1 - g, g]), names=["g=0", "g=1"]
    )
    return sample, design


class TestResolvePolicy:
    def test_manual_h_subgroup_broadcasts(self):
        sample, design = subgroup_fixture()
        res = resolve_policy(
            BandwidthPolicy(kind="manual", h=0.4), design, sample, 0.0, 1, "triangular"
        )
        assert res.per_group == {"g=0": 0.4, "g=1": 0.4}
        assert res.for_group("g=1") == 0.4

    def test_manual_per_group(self):
        sample, design = subgroup_fixture()
        res = resolve_policy(
            BandwidthPolicy(kind="manual", per_group={"g=0": 0.3, "g=1": 0.5}),
            design,
            sample,
            0.0,
            1,
            "triangular",
        )
        assert res.per_group == {"g=0": 0.3, "g=1": 0.5}

    def test_manual_per_group_missing_label(self):
        sample, design = subgroup_fixture()
        with pytest.raises(ValueError, match="g=1"):
            resolve_policy(
                BandwidthPolicy(kind="manual", per_group={"g=0": 0.3}),
                design,
                sample,
                0.0,
                1,
                "triangular",
            )

    def test_manual_h_pooled(self):
        sample, _ = subgroup_fixture()
        res = resolve_policy(
            BandwidthPolicy(kind="manual", h=0.4), None, sample, 0.0, 1, "triangular"
        )
        assert res.joint == 0.4
        assert res.per_group is None

    def test_per_group_requires_subgroup(self):
        sample, _ = subgroup_fixture()
        with pytest.raises(ValueError):
            resolve_policy(
                BandwidthPolicy(kind="manual", per_group={"a": 0.1}),
                None,
                sample,
                0.0,
                1,
                "triangular",
            )

    def test_auto_per_group_differs_with_curvature(self):
        sample, design = subgroup_fixture()
        res = resolve_policy(
            BandwidthPolicy(), design, sample, 0.0, 1, "triangular"
        )
        assert set(res.per_group) == {"g=0", "g=1"}
        assert res.per_group["g=1"] < res.per_group["g=0"]
        assert set(res.diagnostics) == {"g=0", "g=1"}

    def test_auto_joint_single_value(self):
        sample, design = subgroup_fixture()
        res = resolve_policy(
            BandwidthPolicy(joint=True), design, sample, 0.0, 1, "triangular"
        )
        assert res.per_group is None
        assert res.joint > 0
        assert res.labels() == ["joint"]


def test_policy_validation():
    with pytest.raises(ValueError):
        BandwidthPolicy(kind="other")
    with pytest.raises(ValueError):
        BandwidthPolicy(kind="manual")
    with pytest.raises(NonpositiveBandwidth):
        BandwidthPolicy(kind="manual", h=0.0)
    with pytest.raises(NonpositiveBandwidth):
        BandwidthPolicy(kind="manual", per_group={"a": -1.0})
    with pytest.raises(ValueError):
        BandwidthPolicy(kind="manual", per_group={"a": 1.0}, joint=True)
