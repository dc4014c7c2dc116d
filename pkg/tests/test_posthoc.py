import math

import numpy as np
import pytest
from scipy.stats import chi2, norm

from rdhetero.errors import EmptyCombo, SingularContrastCovariance, UnknownLabel
from rdhetero.estimator import EstimationConfig, RdResult
from rdhetero.posthoc import LinearCombo, lincom, parse_combo, wald_test


def fake_result(labels, theta, V, level=0.95):
    return RdResult(
        mode="subgroup",
        rows=[],
        theta_labels=list(labels),
        theta_hat=np.asarray(theta, dtype=float),
        V_rbc=np.asarray(V, dtype=float),
        config=EstimationConfig(cutoff=0.0, level=level),
        joint_fit=False,
    )


@pytest.fixture
def two_group():
    # labels contain '=' to exercise operator-lookalike parsing
    return fake_result(
        ["w=1", "w=0"], [0.089, 0.021], [[0.0004, 0.0], [0.0, 0.0009]]
    )


class TestParse:
    def test_difference(self, two_group):
        combo = parse_combo("w=1 - w=0", two_group)
        assert combo.terms == ((1.0, "w=1"), (-1.0, "w=0"))

    def test_weighted_sum(self, two_group):
        combo = parse_combo("0.5*w=1 + 0.5*w=0", two_group)
        assert combo.terms == ((0.5, "w=1"), (0.5, "w=0"))

    def test_coefficient_without_star(self, two_group):
        combo = parse_combo("2w=1", two_group)
        assert combo.terms == ((2.0, "w=1"),)

    def test_leading_minus(self, two_group):
        combo = parse_combo("-w=0", two_group)
        assert combo.terms == ((-1.0, "w=0"),)

    def test_scientific_coefficient(self, two_group):
        combo = parse_combo("1e-1*w=1", two_group)
        assert combo.terms == ((0.1, "w=1"),)

    def test_labels_with_hash(self):
        res = fake_result(["T", "a=1#b"], [0.1, 0.2], np.eye(2))
        combo = parse_combo("T + a=1#b", res)
        assert combo.terms == ((1.0, "T"), (1.0, "a=1#b"))

    def test_unknown_label_lists_available(self, two_group):
        with pytest.raises(UnknownLabel) as err:
            parse_combo("w=1 - w=2", two_group)
        assert "w=1" in str(err.value)
        assert "w=0" in str(err.value)

    def test_missing_operator_rejected(self, two_group):
        with pytest.raises(UnknownLabel):
            parse_combo("w=1 w=0", two_group)

    def test_empty_expression(self, two_group):
        with pytest.raises(EmptyCombo):
            parse_combo("   ", two_group)

    def test_all_zero_coefficients(self, two_group):
        with pytest.raises(EmptyCombo):
            parse_combo("0*w=1 + 0*w=0", two_group)

    def test_repeated_label_accumulates(self, two_group):
        combo = parse_combo("w=1 + w=1", two_group)
        vec = combo.vector(two_group.theta_labels)
        np.testing.assert_array_equal(vec, [2.0, 0.0])


class TestLincom:
    def test_difference_estimate_and_se(self, two_group):
        out = lincom(two_group, parse_combo("w=1 - w=0", two_group))
        assert out.estimate == 0.089 - 0.021
        assert out.se == pytest.approx(math.sqrt(0.0013), rel=1e-14)

    def test_unit_combo_reproduces_row(self, two_group):
        out = lincom(two_group, parse_combo("w=1", two_group))
        assert out.estimate == 0.089
        assert out.se == math.sqrt(0.0004)

    def test_inference_fields(self, two_group):
        out = lincom(two_group, parse_combo("w=1 - w=0", two_group))
        assert out.z == pytest.approx(out.estimate / out.se, rel=1e-14)
        assert out.p_value == pytest.approx(2 * norm.sf(abs(out.z)), rel=1e-13)
        zc = norm.ppf(0.975)
        assert out.ci_low == pytest.approx(out.estimate - zc * out.se, rel=1e-12)
        assert out.ci_high == pytest.approx(out.estimate + zc * out.se, rel=1e-12)

    def test_linearity(self, two_group):
        a = lincom(two_group, parse_combo("w=1", two_group)).estimate
        b = lincom(two_group, parse_combo("w=0", two_group)).estimate
        s = lincom(two_group, parse_combo("w=1 + w=0", two_group)).estimate
        assert s == pytest.approx(a + b, rel=1e-14)

    def test_correlated_covariance(self):
        V = [[0.04, 0.01], [0.01, 0.09]]
        res = fake_result(["A", "B"], [1.0, 2.0], V)
        out = lincom(res, parse_combo("A - B", res))
        assert out.se == pytest.approx(math.sqrt(0.04 + 0.09 - 2 * 0.01), rel=1e-14)

    def test_zero_variance_gives_nan_inference(self):
        res = fake_result(["A", "B"], [1.0, 1.0], np.zeros((2, 2)))
        out = lincom(res, parse_combo("A - B", res))
        assert out.se == 0.0
        assert math.isnan(out.z)
        assert math.isnan(out.p_value)


class TestWald:
    def test_single_combo_is_squared_z(self, two_group):
        combo = parse_combo("w=1 - w=0", two_group)
        lc = lincom(two_group, combo)
        wd = wald_test(two_group, [combo])
        assert wd.df == 1
        assert wd.chi2 == pytest.approx(lc.z**2, abs=1e-12)
        assert wd.p_value == pytest.approx(chi2.sf(lc.z**2, 1), rel=1e-12)

    def test_duplicate_combo_dropped(self, two_group):
        combo = parse_combo("w=1 - w=0", two_group)
        wd = wald_test(two_group, [combo, combo])
        assert wd.df == 1
        assert wd.dropped == (1,)

    def test_scaled_duplicate_dropped(self, two_group):
        c1 = parse_combo("w=1 - w=0", two_group)
        c2 = parse_combo("2*w=1 - 2*w=0", two_group)
        wd = wald_test(two_group, [c1, c2])
        assert wd.df == 1
        assert wd.dropped == (1,)

    def test_full_rank_identity_contrast(self):
        res = fake_result(["A", "B"], [0.0, 0.0], np.eye(2))
        combos = [parse_combo("A", res), parse_combo("B", res)]
        wd = wald_test(res, combos)
        assert wd.chi2 == 0.0
        assert wd.df == 2
        assert wd.p_value == 1.0

    def test_quadratic_form_oracle(self):
        theta = np.array([0.5, -0.2, 0.1])
        V = np.array([[0.05, 0.01, 0.0], [0.01, 0.08, 0.02], [0.0, 0.02, 0.06]])
        res = fake_result(["a", "b", "c"], theta, V)
        combos = [parse_combo("a - b", res), parse_combo("b - c", res)]
        R = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
        want = R @ theta @ np.linalg.solve(R @ V @ R.T, R @ theta)
        wd = wald_test(res, combos)
        assert wd.chi2 == pytest.approx(want, rel=1e-12)

    def test_singular_covariance(self):
        res = fake_result(["A", "B"], [1.0, 2.0], np.zeros((2, 2)))
        with pytest.raises(SingularContrastCovariance):
            wald_test(res, [parse_combo("A - B", res)])

    def test_empty_combo_list(self, two_group):
        with pytest.raises(EmptyCombo):
            wald_test(two_group, [])


def test_vector_raw_combo():
    combo = LinearCombo(terms=((1.0, "b"), (2.5, "a")))
    np.testing.assert_array_equal(combo.vector(["a", "b"]), [2.5, 1.0])
