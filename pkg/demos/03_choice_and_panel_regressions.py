#!/usr/bin/env python3
"""The two regression analyses on synthetic data with known coefficients.

First the pairwise-choice logit: which of two image sets looks more
informative, regressed on the difference and on the share of their cluster
counts. Then the shopping panel: purchase and decision time on k/1000,
price/1000 and the number of images, with brand and participant fixed
effects absorbed.
"""

from imgk import stats
from imgk.synth import gen_choice_data, gen_panel

# --- choice experiment -----------------------------------------------------
# True model: logit(p) = -0.5 + 1.0 * k1/(k1+k2); covariates carry no signal.
rows = gen_choice_data(beta=[-0.5, 1.0], n=5000, spec="ratio", seed=42)

fits = []
for i, (spec, controls) in enumerate(
    [("diff", False), ("diff", True), ("ratio", False), ("ratio", True)]
):
    x, y, names = stats.build_exp1_design(rows, spec=spec, with_controls=controls)
    fits.append(stats.fit_logit(x, y, names, label=f"({i + 1})",
                                info={"controls": controls}))

print(stats.report_table(fits, style="exp1"))
print("True data-generating slope on the ratio term: 1.0; columns (3)-(4) estimate it.")
ratio_fit = fits[2]
low, high = ratio_fit.conf_int("k_ratio")
print(f"Estimated: {ratio_fit.coef('k_ratio'):.4f}, 95% CI [{low:.4f}, {high:.4f}]\n")

# --- shopping panel ----------------------------------------------------------
# True slopes on (k/1000, price/1000, n_images); user and brand effects present.
true_beta = [-0.18, -0.08, 0.03]
panel = gen_panel(true_beta, n_users=996, products_per_user=10,
                  fe_std=0.05, noise_std=0.0, seed=7, outcome="binary")
print(f"panel: {len(panel)} observations, "
      f"{len({r.participant_id for r in panel})} participants, "
      f"{len({r.brand_id for r in panel})} brands")

panel_fits = []
for outcome in ("purchase", "decision_time"):
    for i, (brand, user) in enumerate([(False, False), (True, False), (True, True)]):
        panel_fits.append(
            stats.fit_fe_ols(panel, outcome=outcome, brand_fe=brand, user_fe=user,
                             label=f"({i + 1})")
        )
print()
print(stats.report_table(panel_fits, style="exp2"))
print(f"True purchase slopes: k/1000 {true_beta[0]}, price/1000 {true_beta[1]}, "
      f"n_images {true_beta[2]} (Panel B's decision-time column is filler noise here).")
