import math

import numpy as np
import pytest

from rdhetero.bandwidth import BandwidthPolicy
from rdhetero.data import classify_heterogeneity, parse_covariate_spec
from rdhetero.estimator import EstimationConfig, estimate, estimate_ate
from rdhetero.montecarlo import (
    PRESETS,
    DgpSpec,
    coverage_experiment,
    generate,
    to_frame,
)


def manual(h):
    return BandwidthPolicy(kind="manual", h=h)


class TestGenerate:
    def test_seed_determinism(self):
        a = generate(DgpSpec("linear", 200, seed=5))
        b = generate(DgpSpec("linear", 200, seed=5))
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x, b.x)

    def test_seeds_differ(self):
        a = generate(DgpSpec("linear", 200, seed=5))
        b = generate(DgpSpec("linear", 200, seed=6))
        assert not np.array_equal(a.y, b.y)

    def test_tuple_seed_accepted(self):
        a = generate(DgpSpec("linear", 50, seed=(3, 1)))
        b = generate(DgpSpec("linear", 50, seed=(3, 2)))
        assert not np.array_equal(a.y, b.y)

    def test_score_support_and_size(self):
        s = generate(DgpSpec("quadratic", 500, seed=0))
        assert s.n == 500
        assert s.x.min() >= -1.0 and s.x.max() <= 1.0
        assert set(s.w_raw) == {"w"}

    def test_binary_preset_w_is_binary(self):
        s = generate(DgpSpec("binary_subgroup", 300, seed=2))
        assert set(np.unique(s.w_raw["w"])) <= {0.0, 1.0}

    def test_round_robin_clusters(self):
        s = generate(DgpSpec("linear", 20, seed=0, n_clusters=7))
        np.testing.assert_array_equal(s.cluster, np.arange(20) % 7)

    def test_n_clusters_equal_n_gives_singletons(self):
        s = generate(DgpSpec("linear", 25, seed=0, n_clusters=25))
        assert np.unique(s.cluster).size == 25

    def test_zero_cluster_sd_leaves_outcome_unchanged(self):
        base = generate(DgpSpec("linear", 100, seed=4))
        clustered = generate(DgpSpec("linear", 100, seed=4, n_clusters=10, cluster_sd=0.0))
        np.testing.assert_array_equal(base.y, clustered.y)

    def test_with_z(self):
        s = generate(DgpSpec("linear", 60, seed=0, with_z=True))
        assert set(s.z_raw) == {"z"}

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            generate(DgpSpec("nope", 10))


def test_to_frame_columns():
    s = generate(DgpSpec("quadratic", 40, seed=1, n_clusters=5, with_z=True))
    frame = to_frame(s)
    assert list(frame.columns) == ["y", "x", "w", "z", "cluster"]
    assert len(frame) == 40


class TestTruthClosure:
    """Each stored truth equals the effect function at the cutoff."""

    def test_ate_presets(self):
        for name in ("linear", "high_curvature"):
            preset = PRESETS[name]
            assert preset.truth["ATE"] == preset.tau(0.0, None)

    def test_functional_presets(self):
        for name in ("quadratic", "cubic_hetero"):
            preset = PRESETS[name]
            assert preset.truth["T"] == preset.tau(0.0, 0.0)
            assert preset.truth["w"] == pytest.approx(
                preset.tau(0.0, 1.0) - preset.tau(0.0, 0.0), abs=1e-15
            )

    def test_subgroup_preset(self):
        preset = PRESETS["binary_subgroup"]
        assert preset.truth["w=0"] == preset.tau(0.0, 0.0)
        assert preset.truth["w=1"] == pytest.approx(preset.tau(0.0, 1.0), abs=1e-15)


class TestZeroNoiseExactness:
    def test_quadratic_generic(self):
        sample = generate(DgpSpec("quadratic", 600, noise_sd=0.0, seed=1))
        design = classify_heterogeneity(parse_covariate_spec("c.w", sample), sample)
        res = estimate(
            sample, EstimationConfig(cutoff=0.0, bandwidth=manual(0.5)), design
        )
        assert res.rows[0].rbc == pytest.approx(0.2, abs=1e-8)
        assert res.rows[1].rbc == pytest.approx(0.3, abs=1e-8)

    def test_binary_subgroup(self):
        sample = generate(DgpSpec("binary_subgroup", 900, noise_sd=0.0, seed=3))
        design = classify_heterogeneity(parse_covariate_spec("i.w", sample), sample)
        res = estimate(
            sample, EstimationConfig(cutoff=0.0, bandwidth=manual(0.5)), design
        )
        by_label = {r.label: r.rbc for r in res.rows}
        assert by_label["w=0"] == pytest.approx(0.021, abs=1e-8)
        assert by_label["w=1"] == pytest.approx(0.089, abs=1e-8)

    def test_linear_ate(self):
        sample = generate(DgpSpec("linear", 400, noise_sd=0.0, seed=2))
        res = estimate_ate(sample, EstimationConfig(cutoff=0.0, bandwidth=manual(0.6)))
        assert res.rows[0].rbc == pytest.approx(0.5, abs=1e-10)


class TestCoverage:
    def test_smoke_report_shape(self):
        spec = DgpSpec("linear", 250, seed=10)
        config = EstimationConfig(cutoff=0.0, bandwidth=manual(0.5))
        report = coverage_experiment(spec, config, replications=20, workers=2)
        assert report.replications == 20
        assert report.failed == 0
        row = report.row("ATE")
        assert 0.5 <= row.coverage <= 1.0
        assert math.isfinite(row.mean_bias)
        assert row.mean_h == pytest.approx(0.5)
        with pytest.raises(KeyError):
            report.row("other")

    def test_worker_count_does_not_change_results(self):
        spec = DgpSpec("quadratic", 300, seed=7)
        config = EstimationConfig(cutoff=0.0, bandwidth=manual(0.6))
        r1 = coverage_experiment(spec, config, replications=12, workers=1)
        r4 = coverage_experiment(spec, config, replications=12, workers=4)
        assert [str(r) for r in r1.rows] == [str(r) for r in r4.rows]

    def test_failed_replications_counted(self):
        # 8 points almost never give 3 per side inside h = 0.05
        spec = DgpSpec("linear", 8, seed=0)
        config = EstimationConfig(cutoff=0.0, bandwidth=manual(0.05))
        report = coverage_experiment(spec, config, replications=10, workers=1)
        assert report.failed == 10
        assert math.isnan(report.row("ATE").coverage)

    def test_replication_validation(self):
        with pytest.raises(ValueError):
            coverage_experiment(
                DgpSpec("linear", 50),
                EstimationConfig(cutoff=0.0, bandwidth=manual(0.5)),
                replications=0,
            )
