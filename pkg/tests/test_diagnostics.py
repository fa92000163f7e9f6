import numpy as np
import pytest
from scipy import stats

from aggiv.dataset import Dataset
from aggiv.diagnostics import (
    SARGAN_CONFIGS,
    classify_instrument,
    instrument_treatment_correlation,
    sargan_power_curve,
    sargan_scm,
    sargan_test,
)
from aggiv.errors import UnderidentifiedError
from aggiv.scm import AggregateIvScm, sample_observational


def _sample(config, beta1, n=1000, seed=0):
    return sample_observational(sargan_scm(beta1, SARGAN_CONFIGS[config]), n, seed)


class TestSarganTest:
    def test_orthogonal_residuals(self):
        # y is an exact linear function of a, so the 2SLS residual is identically zero
        rng = np.random.default_rng(0)
        z = rng.normal(size=(200, 2))
        a = z @ [1.0, 0.5] + rng.normal(size=200)
        data = Dataset(("a", "y", "i1", "i2"), np.column_stack([a, 3 * a - 1, z]))
        report = sargan_test(data, "a", "y", ["i1", "i2"])
        assert report.statistic == pytest.approx(0.0, abs=1e-12)
        assert report.p_value == pytest.approx(1.0, abs=1e-12)
        assert not report.reject

    def test_residual_orthogonal_to_instruments(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(300, 2))
        a = z @ [1.0, -0.7] + rng.normal(size=300)
        design = np.column_stack([np.ones(300), z])
        e = rng.normal(size=300)
        e -= design @ np.linalg.lstsq(design, e, rcond=None)[0]
        data = Dataset(("a", "y", "i1", "i2"), np.column_stack([a, 2 * a + e, z]))
        report = sargan_test(data, "a", "y", ["i1", "i2"])
        assert report.statistic == pytest.approx(0.0, abs=1e-10)
        assert report.p_value == pytest.approx(1.0, abs=1e-6)

    def test_underidentified(self):
        with pytest.raises(UnderidentifiedError, match="under-identification"):
            sargan_test(_sample("Strong-Strong", 2.0), "a", "y", ["i1"])

    def test_report_consistency(self):
        report = sargan_test(_sample("Strong-Strong", 0.0), "a", "y", ["i1", "i2"], level=0.01)
        assert report.dof == 1
        assert report.p_value == pytest.approx(stats.chi2.sf(report.statistic, 1))
        assert report.reject == (report.p_value < 0.01)
        assert report.reject  # beta1 far from proportional with two strong instruments

    def test_against_textbook_formula(self):
        data = _sample("Strong-Weak", 1.0, n=500, seed=4)
        z = np.column_stack([np.ones(500), data.select(["i1", "i2"])])
        x = np.column_stack([np.ones(500), data["a"]])
        pz = z @ np.linalg.solve(z.T @ z, z.T)
        b = np.linalg.solve(x.T @ pz @ x, x.T @ pz @ data["y"])
        u = data["y"] - x @ b
        expected = 500 * (u @ pz @ u - 500 * u.mean() ** 2) / (u @ u - 500 * u.mean() ** 2)
        assert sargan_test(data, "a", "y", ["i1", "i2"]).statistic == pytest.approx(expected, rel=1e-8)

    def test_instrument_rescaling_invariance(self):
        data = _sample("Strong-Weak", 0.5, seed=9)
        z = data.select(["i1", "i2"]) * [3.0, -0.01]
        moved = Dataset(("a", "y", "z1", "z2"), np.column_stack([data["a"], data["y"], z]))
        base = sargan_test(data, "a", "y", ["i1", "i2"])
        assert sargan_test(moved, "a", "y", ["z1", "z2"]).p_value == pytest.approx(base.p_value, rel=1e-9)


class TestPowerCurve:
    def test_rows_and_determinism(self):
        grid = [1.0, 2.0]
        rows = sargan_power_curve(sargan_scm(0.0, SARGAN_CONFIGS["Strong-Strong"]), grid, replicates=5, n=200, seed=3)
        assert len(rows) == 3 * 2 * 2
        assert rows == sorted(rows, key=lambda r: (r.config, r.level, r.beta1))
        again = sargan_power_curve(sargan_scm(0.0, SARGAN_CONFIGS["Strong-Strong"]), grid, replicates=5, n=200, seed=3)
        assert rows == again
        parallel = sargan_power_curve(
            sargan_scm(0.0, SARGAN_CONFIGS["Strong-Strong"]), grid, replicates=5, n=200, seed=3, jobs=2
        )
        assert rows == parallel
        for row in rows:
            assert row.frequency == row.rejections / row.replicates
            assert row.failures == 0

    def test_levels_are_nested(self):
        rows = sargan_power_curve(sargan_scm(0.0, SARGAN_CONFIGS["Strong-Strong"]), [1.5], replicates=30, n=300)
        by_key = {(r.config, r.level): r.rejections for r in rows}
        for config in SARGAN_CONFIGS:
            assert by_key[(config, 0.01)] <= by_key[(config, 0.5)]

    def test_strong_strong_power_grows(self):
        rows = sargan_power_curve(
            sargan_scm(0.0, SARGAN_CONFIGS["Strong-Strong"]),
            [2.0, 0.0],
            configs={"Strong-Strong": SARGAN_CONFIGS["Strong-Strong"]},
            replicates=50,
            levels=(0.01,),
            seed=1,
        )
        freq = {r.beta1: r.frequency for r in rows}
        assert freq[0.0] > freq[2.0]
        assert freq[0.0] > 0.9

    def test_weak_weak_has_little_power(self):
        rows = sargan_power_curve(
            sargan_scm(0.0, SARGAN_CONFIGS["Weak-Weak"]),
            [-1.0, 4.0],
            configs={"Weak-Weak": SARGAN_CONFIGS["Weak-Weak"]},
            replicates=50,
            levels=(0.01,),
        )
        assert all(r.frequency < 0.1 for r in rows)

    def test_bad_inputs(self):
        from aggiv.errors import InvalidModelError

        with pytest.raises(InvalidModelError):
            sargan_power_curve(sargan_scm(0.0, SARGAN_CONFIGS["Weak-Weak"]), [1.0], replicates=0)


class TestInstrumentStrength:
    @pytest.mark.parametrize(
        "config, expected",
        [("Strong-Weak", (0.977, 0.037)), ("Strong-Strong", (0.788, 0.591)), ("Weak-Weak", (0.142, 0.074))],
    )
    def test_correlations(self, config, expected):
        scm = sargan_scm(1.0, SARGAN_CONFIGS[config])
        got = tuple(round(instrument_treatment_correlation(scm, l), 3) for l in range(2))
        assert got == expected

    def test_closed_form_two_instruments(self):
        for delta in SARGAN_CONFIGS.values():
            (d11, d12), (d21, d22) = delta
            denom = np.sqrt((d11 + d12) ** 2 + (d21 + d22) ** 2 + 3)
            scm = sargan_scm(1.0, delta)
            assert instrument_treatment_correlation(scm, 0) == pytest.approx((d11 + d12) / denom, rel=1e-14)
            assert instrument_treatment_correlation(scm, 1) == pytest.approx((d21 + d22) / denom, rel=1e-14)

    def test_no_path(self):
        scm = AggregateIvScm(alpha=[1, 1], beta=[1, 1], delta=[[0, 0]])
        assert instrument_treatment_correlation(scm) == 0

    def test_classification_matches_labels(self):
        for config, delta in SARGAN_CONFIGS.items():
            labels = [classify_instrument(instrument_treatment_correlation(sargan_scm(1.0, delta), l)) for l in (0, 1)]
            assert "-".join(label.capitalize() for label in labels) == config

    @pytest.mark.parametrize("r, label", [(0.51, "strong"), (0.5, "intermediate"), (0.2, "intermediate"), (0.19, "weak")])
    def test_thresholds(self, r, label):
        assert classify_instrument(r) == label
