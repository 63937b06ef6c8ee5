import numpy as np
import pytest

from imgk import stats
from imgk.errors import RankDeficiencyError, SchemaError, SeparationError, ValidationError
from imgk.seeds import derive_seed
from imgk.synth import gen_choice_data, gen_panel
from imgk.validate import lsdv_fit


def choice_row(y=1, k1=250, k2=250, n_cov=9, seed=0):
    rng = np.random.default_rng(seed)
    return stats.ChoiceRow("u", "p", y, k1, k2, rng.standard_normal(n_cov),
                           rng.standard_normal(n_cov))


class TestExp1Design:
    def test_symmetric_ks_give_ratio_half(self):
        x, _, names = stats.build_exp1_design([choice_row(k1=250, k2=250)], spec="ratio")
        assert x[0, names.index("k_ratio")] == 0.5

    def test_diff_arithmetic(self):
        x, _, names = stats.build_exp1_design([choice_row(k1=300, k2=200)], spec="diff")
        assert x[0, names.index("k_diff")] == 100.0

    def test_controls_add_nine_columns(self):
        x, _, names = stats.build_exp1_design([choice_row()], spec="diff", with_controls=True)
        assert x.shape[1] == 1 + 1 + 9
        assert names[0] == "intercept" and names[2:] == [f"d_{c}" for c in stats.COVARIATE_NAMES]

    def test_invalid_rows_rejected(self):
        with pytest.raises(ValidationError):
            choice_row(y=2)
        with pytest.raises(ValidationError):
            choice_row(k1=1)


class TestLogit:
    def test_null_slope_is_statistically_zero(self):
        hits = 0
        reps = 20
        for rep in range(reps):
            rng = np.random.default_rng(derive_seed(1, rep))
            n = 5000
            x = np.column_stack([np.ones(n), rng.standard_normal(n)])
            y = (rng.random(n) < 0.5).astype(float)
            fit = stats.fit_logit(x, y, ["intercept", "noise"])
            hits += abs(fit.coef("noise")) <= 3 * fit.se("noise")
        assert hits >= int(0.95 * reps)

    def test_recovers_scaled_difference_slope(self):
        hits = 0
        reps = 25
        for rep in range(reps):
            rng = np.random.default_rng(derive_seed(2, rep))
            n = 4000
            diff = rng.integers(-450, 451, size=n).astype(float)
            p = 1.0 / (1.0 + np.exp(-(0.0 + 1.0 * diff / 1000.0)))
            y = (rng.random(n) < p).astype(float)
            x = np.column_stack([np.ones(n), diff / 1000.0])
            fit = stats.fit_logit(x, y, ["intercept", "k_diff_per_1000"])
            low, high = fit.conf_int("k_diff_per_1000")
            hits += low <= 1.0 <= high
        assert hits >= int(0.88 * reps)

    def test_perfect_separation_raises(self):
        x_vals = np.concatenate([np.linspace(-1.5, -0.5, 20), np.linspace(0.5, 1.5, 20)])
        y = (x_vals > 0).astype(float)
        x = np.column_stack([np.ones(40), x_vals])
        with pytest.raises(SeparationError):
            stats.fit_logit(x, y)

    def test_rank_deficient_design_rejected(self):
        rng = np.random.default_rng(0)
        col = rng.standard_normal(100)
        x = np.column_stack([np.ones(100), col, 2 * col])
        y = (rng.random(100) < 0.5).astype(float)
        with pytest.raises(RankDeficiencyError):
            stats.fit_logit(x, y)

    def test_intercept_only_pseudo_r2_exactly_zero(self):
        rng = np.random.default_rng(3)
        y = (rng.random(500) < 0.3).astype(float)
        fit = stats.fit_logit(np.ones((500, 1)), y, ["intercept"])
        assert fit.fit_stat == 0.0

    def test_gradient_solved_to_tolerance(self):
        rows = gen_choice_data([-0.5, 1.0], 2000, spec="ratio", seed=5)
        x, y, names = stats.build_exp1_design(rows, spec="ratio")
        fit = stats.fit_logit(x, y, names)
        assert fit.info["grad_max"] < 1e-10

    def test_rescaling_regressor_rescales_coefficient(self):
        rows = gen_choice_data([0.2, 0.004], 3000, spec="diff", seed=6)
        x, y, names = stats.build_exp1_design(rows, spec="diff")
        fit_raw = stats.fit_logit(x, y, names)
        x_scaled = x.copy()
        x_scaled[:, 1] /= 1000.0
        fit_scaled = stats.fit_logit(x_scaled, y, names)
        assert fit_raw.coef("k_diff") * 1000.0 == pytest.approx(
            fit_scaled.coef("k_diff"), abs=1e-8
        )


class TestFeOls:
    def small_panel(self, seed=0, **kwargs):
        return gen_panel([-0.18, -0.08, 0.03], n_users=10, products_per_user=5,
                         fe_std=0.3, noise_std=0.2, seed=seed, outcome="linear", **kwargs)

    def test_within_equals_lsdv_on_small_panel(self):
        rows = self.small_panel(seed=1)
        fit = stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True)
        _, codes = np.unique([r.participant_id for r in rows], return_inverse=True)
        x = np.column_stack([
            [r.k / 1000 for r in rows],
            [r.price / 1000 for r in rows],
            [r.n_images for r in rows],
        ])
        y = np.array([r.decision_time for r in rows])
        beta_lsdv, se_lsdv = lsdv_fit(y, x, codes)
        assert np.max(np.abs(fit.estimates[:3] - beta_lsdv)) <= 1e-8
        assert np.max(np.abs(fit.std_errors[:3] - se_lsdv)) <= 1e-8

    def test_participant_shift_absorbed(self):
        rows = self.small_panel(seed=2)
        baseline = stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True)
        target = rows[0].participant_id
        shifted = [
            stats.PanelRow(
                r.participant_id, r.product_id, r.brand_id, r.set_id, r.purchase,
                r.decision_time + (5.0 if r.participant_id == target else 0.0),
                r.k, r.price, r.n_images,
            )
            for r in rows
        ]
        fit = stats.fit_fe_ols(shifted, outcome="decision_time", user_fe=True)
        assert np.max(np.abs(fit.estimates - baseline.estimates)) <= 1e-10

    def test_brand_dummies_included_when_flagged(self):
        rows = self.small_panel(seed=3)
        fit = stats.fit_fe_ols(rows, outcome="decision_time", brand_fe=True)
        n_brands = len({r.brand_id for r in rows})
        assert sum(name.startswith("brand[") for name in fit.names) == n_brands - 1
        assert "intercept" in fit.names

    def test_degenerate_regressor_named(self):
        rows = [
            stats.PanelRow(f"u{i % 3}", f"p{i}", "b0", f"s{i}", i % 2, 10.0 + i,
                           100, 50.0, 2)  # n_images constant everywhere
            for i in range(12)
        ]
        with pytest.raises(RankDeficiencyError) as err:
            stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True)
        assert err.value.column in ("k_per_1000", "price_per_1000", "n_images")

    def test_orthogonal_control_leaves_coefficients_unchanged(self):
        rng = np.random.default_rng(8)
        n = 200
        x = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
        y = x @ np.array([1.0, 0.5, -0.3]) + rng.standard_normal(n)
        beta_before = np.linalg.lstsq(x, y, rcond=None)[0]
        extra = rng.standard_normal(n)
        extra -= x @ np.linalg.lstsq(x, extra, rcond=None)[0]  # orthogonalize
        beta_after = np.linalg.lstsq(np.column_stack([x, extra]), y, rcond=None)[0]
        assert np.max(np.abs(beta_after[:3] - beta_before)) <= 1e-8

    def test_r2_reported_on_untransformed_outcome(self):
        rows = self.small_panel(seed=4)
        fit = stats.fit_fe_ols(rows, outcome="decision_time", brand_fe=True, user_fe=True)
        y = np.array([r.decision_time for r in rows])
        assert fit.fit_stat == pytest.approx(1 - fit.info["rss"] / ((y - y.mean()) ** 2).sum())
        assert 0 <= fit.fit_stat <= 1

    def test_cluster_and_robust_options_run(self):
        rows = self.small_panel(seed=5)
        classical = stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True)
        clustered = stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True,
                                     cluster_by_participant=True)
        robust = stats.fit_fe_ols(rows, outcome="decision_time", user_fe=True, robust=True)
        assert np.array_equal(classical.estimates, clustered.estimates)
        assert np.array_equal(classical.estimates, robust.estimates)
        assert not np.array_equal(classical.std_errors, clustered.std_errors)


class TestReports:
    def test_table1_style_rendering(self):
        rows = gen_choice_data([-0.5, 1.0], 800, spec="ratio", seed=7)
        fits = []
        for spec, controls in [("diff", False), ("ratio", False)]:
            x, y, names = stats.build_exp1_design(rows, spec=spec, with_controls=controls)
            fits.append(stats.fit_logit(x, y, names, label=f"({len(fits) + 1})",
                                        info={"controls": controls}))
        text = stats.report_table(fits, style="exp1")
        assert "k1 - k2" in text and "k1 / (k1 + k2)" in text
        assert "Num. Obs." in text and "pseudo-R2" in text
        assert "800" in text

    def test_strong_coefficient_gets_three_stars(self):
        fit = stats.ModelFit(
            names=("intercept", "k_ratio"),
            estimates=np.array([0.0, 1.0357]),
            std_errors=np.array([0.1, 0.1574]),
            statistics=np.array([0.0, 6.58]),
            p_values=np.array([1.0, 4.7e-11]),
            n_obs=5000, fit_stat=0.006, fit_stat_name="pseudo_r2",
            style="exp1", label="(3)", info={"controls": False},
        )
        text = stats.report_table([fit], style="exp1")
        assert "1.0357***" in text
        assert "(0.1574)" in text

    def test_star_thresholds(self):
        assert stats.significance_stars(0.07) == "*"
        assert stats.significance_stars(0.04) == "**"
        assert stats.significance_stars(0.009) == "***"
        assert stats.significance_stars(0.2) == ""

    def test_two_fits_render_two_columns(self):
        rows = gen_panel([-0.18, -0.08, 0.03], 20, 5, fe_std=0.1, noise_std=0.1,
                         seed=9, outcome="linear")
        fits = [
            stats.fit_fe_ols(rows, outcome="decision_time", label="(1)"),
            stats.fit_fe_ols(rows, outcome="decision_time", brand_fe=True, label="(2)"),
        ]
        text = stats.report_table(fits, style="exp2")
        header = next(line for line in text.splitlines() if "(1)" in line)
        assert "(2)" in header

    def test_mixed_styles_rejected(self):
        rows = gen_panel([0.0, 0.0, 0.0], 10, 5, seed=1)
        ols = stats.fit_fe_ols(rows, outcome="purchase")
        with pytest.raises(ValidationError, match="mixed"):
            stats.report_table([ols], style="exp1")


class TestCsvIngestion:
    def test_exp1_round_trip_via_synth_schema(self, tmp_path):
        rows = gen_choice_data([-0.5, 1.0], 40, spec="ratio", seed=11)
        header = (
            ["participant_id", "product_id", "y", "k1", "k2"]
            + [f"x1_{c}" for c in stats.COVARIATE_NAMES]
            + [f"x2_{c}" for c in stats.COVARIATE_NAMES]
        )
        lines = [",".join(header)]
        for r in rows:
            cells = [r.participant_id, r.product_id, str(r.y), str(r.k1), str(r.k2)]
            cells += [repr(float(v)) for v in r.x1] + [repr(float(v)) for v in r.x2]
            lines.append(",".join(cells))
        path = tmp_path / "exp1.csv"
        path.write_text("\n".join(lines) + "\n")
        loaded, n_dropped = stats.load_exp1_csv(path)
        assert n_dropped == 0
        assert len(loaded) == 40
        assert loaded[0].k1 == rows[0].k1
        assert np.array_equal(loaded[0].x1, rows[0].x1)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "exp2.csv"
        path.write_text("participant_id,product_id,brand_id,set_id,purchase,"
                        "decision_time_s,k,n_images\nu,p,b,s,1,3.5,100,2\n")
        with pytest.raises(SchemaError) as err:
            stats.load_exp2_csv(path)
        assert err.value.column == "price"

    def test_missing_values_dropped_and_counted(self, tmp_path):
        path = tmp_path / "exp2.csv"
        path.write_text(
            "participant_id,product_id,brand_id,set_id,purchase,decision_time_s,k,price,n_images\n"
            "u1,p1,b1,s1,1,3.5,100,50.0,2\n"
            "u2,p2,b1,s2,0,,90,40.0,1\n"
            "u3,p3,b2,s3,1,2.0,80,30.0,3\n"
        )
        rows, n_dropped = stats.load_exp2_csv(path)
        assert len(rows) == 2 and n_dropped == 1
