"""Self-contained synthetic validation suite.

Each check regenerates its own data from the oracle generators, so the suite
needs no external inputs. The oracles here are deliberately naive, independent
implementations (all-pairs Python-loop silhouette, full covariance
eigendecomposition, dummy-variable least squares) used to cross-check the
fast production paths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import stats
from .cluster import SilhouetteSummary, avg_silhouette, silhouette
from .ksearch import SearchConfig, StopReason, find_k_star
from .pca import fit_pca, transform
from .pipeline import PipelineConfig, score_set
from .seeds import derive_seed, generator
from .synth import MixtureSpec, gen_choice_data, gen_mixture, gen_panel

__all__ = [
    "CheckResult",
    "silhouette_bruteforce",
    "pca_eig_oracle",
    "lsdv_fit",
    "run_all",
]

SUITE_SEED = 20_240_901


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def silhouette_bruteforce(points: np.ndarray, labels: np.ndarray) -> float:
    """All-pairs silhouette with explicit loops; no shared code with the
    vectorized implementation."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    scores = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            scores.append(0.0)
            continue
        a = sum(float(np.linalg.norm(points[i] - points[j])) for j in same) / len(same)
        b = np.inf
        for other in set(labels.tolist()) - {labels[i]}:
            members = [j for j in range(n) if labels[j] == other]
            mean_d = sum(
                float(np.linalg.norm(points[i] - points[j])) for j in members
            ) / len(members)
            b = min(b, mean_d)
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def pca_eig_oracle(points: np.ndarray):
    """Explicit covariance eigendecomposition: (ratios descending, eigvecs as rows)."""
    x = np.asarray(points, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    return eigvals / eigvals.sum(), eigvecs[:, order].T


def lsdv_fit(y: np.ndarray, x: np.ndarray, group_codes: np.ndarray):
    """Dummy-variable least squares absorbing one group factor; returns the
    slope estimates and their classical standard errors."""
    n_groups = int(group_codes.max()) + 1
    dummies = np.zeros((len(y), n_groups))
    dummies[np.arange(len(y)), group_codes] = 1.0
    full = np.hstack([x, dummies])
    beta, _, _, _ = np.linalg.lstsq(full, y, rcond=None)
    resid = y - full @ beta
    df = len(y) - full.shape[1]
    sigma2 = float(resid @ resid) / df
    cov = sigma2 * np.linalg.pinv(full.T @ full)
    k = x.shape[1]
    return beta[:k], np.sqrt(np.diag(cov)[:k])


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def _timed(name: str, passed: bool, detail: str, start: float) -> CheckResult:
    return CheckResult(name, passed, detail, time.perf_counter() - start)


def check_k_recovery(quick: bool = False) -> CheckResult:
    """Well-separated mixtures on the step-3 grid must yield k* = k_true in
    at least 19 of 20 seeded trials per k_true (reduced trials in quick mode)."""
    start = time.perf_counter()
    trials = 5 if quick else 20
    required = trials - 1
    k_trues = (2, 5, 8, 11)
    details = []
    passed = True
    for k_true in k_trues:
        hits = 0
        for trial in range(trials):
            spec = MixtureSpec(
                k_true=k_true, points_per_component=30, dim=100,
                center_scale=8.0, within_std=1.0,
                seed=derive_seed(SUITE_SEED, 1, k_true, trial),
            )
            points, _ = gen_mixture(spec)
            config = SearchConfig(
                k_min=2, step=3, patience=5, n_runs=30,
                base_seed=derive_seed(SUITE_SEED, 2, k_true, trial),
            )
            result = find_k_star(points, config)
            hits += result.k_star == k_true
        details.append(f"k={k_true}: {hits}/{trials}")
        passed &= hits >= required
    return _timed("k-recovery", passed, ", ".join(details), start)


def check_silhouette_oracle(quick: bool = False) -> CheckResult:
    """Fast silhouette must agree with the all-pairs oracle to 1e-10."""
    start = time.perf_counter()
    instances = 50 if quick else 200
    worst = 0.0
    rng = generator(derive_seed(SUITE_SEED, 3))
    for _ in range(instances):
        n = int(rng.integers(6, 51))
        k = int(rng.integers(2, 6))
        dim = int(rng.integers(2, 9))
        points = rng.standard_normal((n, dim))
        while True:
            labels = rng.integers(k, size=n)
            if len(np.unique(labels)) >= 2:
                break
        worst = max(worst, abs(silhouette(points, labels) - silhouette_bruteforce(points, labels)))
    return _timed(
        "silhouette-oracle", worst <= 1e-10,
        f"{instances} instances, max |fast - oracle| = {worst:.3e}", start,
    )


def check_pca_oracle(quick: bool = False) -> CheckResult:
    """Ratios and top-L projector must match the eigendecomposition to 1e-8."""
    start = time.perf_counter()
    matrices = 5 if quick else 20
    l_top = 10
    worst_ratio = 0.0
    worst_proj = 0.0
    rng = generator(derive_seed(SUITE_SEED, 4))
    for _ in range(matrices):
        points = rng.standard_normal((200, 50))
        model = fit_pca(points, l_top)
        ratios, eigvecs = pca_eig_oracle(points)
        worst_ratio = max(
            worst_ratio,
            float(np.max(np.abs(model.explained_variance_ratio - ratios[:l_top]))),
        )
        proj_fast = model.components.T @ model.components
        top = eigvecs[:l_top]
        proj_oracle = top.T @ top
        worst_proj = max(worst_proj, float(np.linalg.norm(proj_fast - proj_oracle)))
    passed = worst_ratio <= 1e-8 and worst_proj <= 1e-8
    return _timed(
        "pca-oracle", passed,
        f"{matrices} matrices, max ratio diff {worst_ratio:.3e}, "
        f"max projector Frobenius {worst_proj:.3e}", start,
    )


def check_restart_determinism(quick: bool = False) -> CheckResult:
    """avg_silhouette must be bitwise identical across worker counts 1, 4, 8."""
    start = time.perf_counter()
    spec = MixtureSpec(k_true=3, points_per_component=30, dim=20,
                       center_scale=10.0, within_std=1.0,
                       seed=derive_seed(SUITE_SEED, 5))
    points, _ = gen_mixture(spec)
    summaries = [
        avg_silhouette(points, 3, 30, derive_seed(SUITE_SEED, 6), workers=w)
        for w in (1, 4, 8)
    ]
    ref = summaries[0]
    passed = all(
        s.mean_score == ref.mean_score
        and np.array_equal(s.per_run_scores, ref.per_run_scores)
        for s in summaries[1:]
    )
    return _timed("restart-determinism", passed,
                  f"mean {ref.mean_score:.6f} identical for workers 1/4/8", start)


def check_stopping_rule(quick: bool = False) -> CheckResult:
    """An injected curve peaking at the 3rd grid point must stop after exactly
    3 + patience evaluations and return the peak k."""
    start = time.perf_counter()
    patience = 7
    peak_value = 0.6

    def stub(points, k, cfg) -> SilhouetteSummary:
        position = (k - cfg.k_min) // cfg.step
        score = 0.2 * (position + 1) if position < 3 else peak_value - 0.01 * (position - 2)
        return SilhouetteSummary(k=k, per_run_scores=np.full(cfg.n_runs, score),
                                 mean_score=score)

    points = np.zeros((500, 2))
    config = SearchConfig(k_min=2, step=3, patience=patience, n_runs=3, base_seed=0)
    result = find_k_star(points, config, evaluate=stub)
    expected_peak_k = 2 + 2 * 3
    passed = (
        len(result.trace) == 3 + patience
        and result.k_star == expected_peak_k
        and result.stop_reason is StopReason.PATIENCE_EXHAUSTED
    )
    return _timed(
        "stopping-rule", passed,
        f"{len(result.trace)} evaluations (want {3 + patience}), "
        f"k*={result.k_star} (want {expected_peak_k})", start,
    )


def check_logit_recovery(quick: bool = False) -> CheckResult:
    """The ratio-spec slope must land in its own 95% CI in >= 45/50 seeded
    replications, with score equations solved to 1e-10 every time."""
    start = time.perf_counter()
    reps = 10 if quick else 50
    required = int(np.ceil(0.9 * reps))
    true_slope = 1.0
    hits = 0
    worst_grad = 0.0
    for rep in range(reps):
        rows = gen_choice_data(
            beta=[-0.5, true_slope], n=5000, spec="ratio",
            seed=derive_seed(SUITE_SEED, 70, rep),
        )
        x, y, names = stats.build_exp1_design(rows, spec="ratio", with_controls=False)
        fit = stats.fit_logit(x, y, names)
        worst_grad = max(worst_grad, fit.info["grad_max"])
        low, high = fit.conf_int("k_ratio")
        hits += low <= true_slope <= high
    passed = hits >= required and worst_grad < 1e-10
    return _timed(
        "logit-recovery", passed,
        f"CI coverage {hits}/{reps}, max gradient norm {worst_grad:.2e}", start,
    )


def check_fe_ols(quick: bool = False) -> CheckResult:
    """Within-transform estimates must equal dummy-variable least squares to
    1e-8 on random unbalanced panels, and recover known slopes on full-size
    panels in >= 45/50 replications."""
    start = time.perf_counter()
    n_panels = 20 if quick else 100
    rng = generator(derive_seed(SUITE_SEED, 8))
    worst = 0.0
    for _ in range(n_panels):
        n_groups = int(rng.integers(5, 21))
        sizes = rng.integers(2, 9, size=n_groups)
        codes = np.repeat(np.arange(n_groups), sizes)
        n = len(codes)
        x = rng.standard_normal((n, 3))
        effects = rng.standard_normal(n_groups)[codes]
        y = x @ np.array([0.5, -0.2, 0.1]) + effects + 0.3 * rng.standard_normal(n)

        demeaned_x = np.empty_like(x)
        for j in range(3):
            sums = np.bincount(codes, weights=x[:, j], minlength=n_groups)
            counts = np.bincount(codes, minlength=n_groups)
            demeaned_x[:, j] = x[:, j] - (sums / counts)[codes]
        sums = np.bincount(codes, weights=y, minlength=n_groups)
        counts = np.bincount(codes, minlength=n_groups)
        demeaned_y = y - (sums / counts)[codes]
        beta_within = np.linalg.solve(demeaned_x.T @ demeaned_x, demeaned_x.T @ demeaned_y)
        beta_lsdv, _ = lsdv_fit(y, x, codes)
        worst = max(worst, float(np.max(np.abs(beta_within - beta_lsdv))))
    equal_ok = worst <= 1e-8

    reps = 10 if quick else 50
    required = int(np.ceil(0.9 * reps))
    true_beta = np.array([-0.18, -0.08, 0.03])
    names = ("k_per_1000", "price_per_1000", "n_images")
    hits = {name: 0 for name in names}
    for rep in range(reps):
        rows = gen_panel(true_beta, n_users=996, products_per_user=10,
                         fe_std=0.05, noise_std=0.0, seed=derive_seed(SUITE_SEED, 9, rep),
                         outcome="binary")
        fit = stats.fit_fe_ols(rows, outcome="purchase", brand_fe=True, user_fe=True)
        for i, name in enumerate(names):
            low, high = fit.conf_int(name)
            hits[name] += low <= true_beta[i] <= high
    recovery_ok = all(h >= required for h in hits.values())
    coverage = ", ".join(f"{n}={h}/{reps}" for n, h in hits.items())
    return _timed(
        "fe-ols", equal_ok and recovery_ok,
        f"within vs LSDV max diff {worst:.3e} over {n_panels} panels; "
        f"9960-row coverage {coverage}", start,
    )


def make_six_cluster_fixture(seed: int = 20_240_607):
    """The reference 6-component pseudo-image set: two 196-patch images whose
    pooled rows come from a strongly separated 6-component mixture."""
    spec = MixtureSpec(
        k_true=6, points_per_component=(66, 66, 65, 65, 65, 65), dim=64,
        center_scale=40.0, within_std=1.0, seed=seed,
    )
    points, labels = gen_mixture(spec)
    order = generator(derive_seed(seed, 1)).permutation(points.shape[0])
    return points[order].astype(np.float32), labels[order], spec


def six_cluster_search_config(base_seed: int = 7) -> SearchConfig:
    # k_min anchors the step-3 grid at 3, 6, 9, ... so the fixture's true
    # component count lies on the grid.
    return SearchConfig(k_min=3, step=3, patience=5, n_runs=30, base_seed=base_seed)


def check_end_to_end(quick: bool = False) -> CheckResult:
    """The full pipeline must score the 6-component pseudo-image set at k*=6."""
    start = time.perf_counter()
    from .embeddings import ImageSetManifest, PatchEmbeddings

    points, _, _ = make_six_cluster_fixture()
    store = {
        "img_000": PatchEmbeddings("img_000", points[:196], "synthetic-mixture-v1"),
        "img_001": PatchEmbeddings("img_001", points[196:], "synthetic-mixture-v1"),
    }
    manifest = ImageSetManifest(set_id="six_cluster", image_ids=("img_000", "img_001"))
    config = PipelineConfig(pca_components=100, search=six_cluster_search_config())
    value = score_set(manifest, store, config)
    passed = value.k_star == 6 and value.n_points == 392
    return _timed(
        "end-to-end", passed,
        f"k*={value.k_star} (want 6), n_points={value.n_points}, "
        f"cumvar@L={value.pca_cumvar_at_l:.3f}", start,
    )


ALL_CHECKS = (
    check_k_recovery,
    check_silhouette_oracle,
    check_pca_oracle,
    check_restart_determinism,
    check_stopping_rule,
    check_logit_recovery,
    check_fe_ols,
    check_end_to_end,
)


def run_all(quick: bool = False) -> list[CheckResult]:
    return [check(quick=quick) for check in ALL_CHECKS]
