"""Choice-experiment logit and participant/brand fixed-effects OLS.

Two analyses share this module. The first regresses a binary
"set 1 judged more informative" outcome on either the difference ``k1 - k2``
or the share ``k1 / (k1 + k2)`` of the two sets' cluster counts, optionally
controlling for differences in nine set-averaged image characteristics. The
second regresses purchase (a linear probability model) or decision time on
``k / 1000``, ``price / 1000`` and the number of images, absorbing brand and
participant heterogeneity with fixed effects.

Logit fitting is straight IRLS (Newton on the log-likelihood) with
step-halving, standard errors from the inverse observed information, and an
explicit separation error instead of silently diverging estimates. The
fixed-effects estimator demeans within participant groups (the within
transformation) and corrects degrees of freedom for the absorbed effects, so
its estimates and classical standard errors match the brute-force
dummy-variable regression exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats as spstats
from scipy.special import expit

from .errors import (
    ConvergenceError,
    RankDeficiencyError,
    SchemaError,
    SeparationError,
    ValidationError,
)

__all__ = [
    "COVARIATE_NAMES",
    "ChoiceRow",
    "PanelRow",
    "ModelFit",
    "build_exp1_design",
    "fit_logit",
    "fit_fe_ols",
    "report_table",
    "report_csv",
    "fits_to_json",
    "load_exp1_csv",
    "load_exp2_csv",
]

COVARIATE_NAMES = (
    "brightness", "contrast", "blur", "saturation", "colorfulness",
    "clarity", "aesthetic", "black_white", "purity",
)

EXP2_COLUMNS = (
    "participant_id", "product_id", "brand_id", "set_id",
    "purchase", "decision_time_s", "k", "price", "n_images",
)

_STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))


def significance_stars(p_value: float) -> str:
    for threshold, stars in _STAR_LEVELS:
        if p_value < threshold:
            return stars
    return ""


@dataclass(frozen=True)
class ChoiceRow:
    """One pairwise informativeness comparison: y = 1 means set 1 won."""

    participant_id: str
    product_id: str
    y: int
    k1: int
    k2: int
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValidationError(f"y must be 0/1, got {self.y}")
        if self.k1 < 2 or self.k2 < 2:
            raise ValidationError(f"k1, k2 must be >= 2, got {self.k1}, {self.k2}")
        x1 = np.asarray(self.x1, dtype=np.float64)
        x2 = np.asarray(self.x2, dtype=np.float64)
        if x1.shape != x2.shape or x1.ndim != 1:
            raise ValidationError("x1 and x2 must be 1-D vectors of equal length")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)


@dataclass(frozen=True)
class PanelRow:
    """One participant-product-imageset observation of the shopping panel."""

    participant_id: str
    product_id: str
    brand_id: str
    set_id: str
    purchase: int
    decision_time: float
    k: int
    price: float
    n_images: int

    def __post_init__(self):
        if self.purchase not in (0, 1):
            raise ValidationError(f"purchase must be 0/1, got {self.purchase}")
        if self.decision_time <= 0:
            raise ValidationError(f"decision_time must be > 0, got {self.decision_time}")
        if self.n_images < 1:
            raise ValidationError(f"n_images must be >= 1, got {self.n_images}")


@dataclass(frozen=True)
class ModelFit:
    """Estimated coefficients with classical inference and fit diagnostics."""

    names: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    statistics: np.ndarray       # z for logit, t for OLS
    p_values: np.ndarray
    n_obs: int
    fit_stat: float
    fit_stat_name: str           # "pseudo_r2" or "r2"
    style: str                   # "exp1" or "exp2"
    label: str = ""
    df_resid: int | None = None
    n_dropped: int = 0
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)

    def coef(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def conf_int(self, name: str, level: float = 0.95):
        i = self.names.index(name)
        if self.df_resid is not None:
            crit = spstats.t.ppf(0.5 + level / 2, self.df_resid)
        else:
            crit = spstats.norm.ppf(0.5 + level / 2)
        return (
            float(self.estimates[i] - crit * self.std_errors[i]),
            float(self.estimates[i] + crit * self.std_errors[i]),
        )

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "style": self.style,
            "names": list(self.names),
            "estimates": self.estimates.tolist(),
            "std_errors": self.std_errors.tolist(),
            "statistics": self.statistics.tolist(),
            "p_values": self.p_values.tolist(),
            "n_obs": self.n_obs,
            "n_dropped": self.n_dropped,
            "fit_stat": self.fit_stat,
            "fit_stat_name": self.fit_stat_name,
            "df_resid": self.df_resid,
            "converged": self.converged,
            "iterations": self.iterations,
            "info": {k: v for k, v in self.info.items() if not isinstance(v, np.ndarray)},
        }


# ---------------------------------------------------------------------------
# Choice experiment: design + logit
# ---------------------------------------------------------------------------

def build_exp1_design(rows: list[ChoiceRow], spec: str = "diff",
                      with_controls: bool = False):
    """Build (X, y, names) for the choice logit.

    ``spec="diff"`` regresses on ``k1 - k2``; ``spec="ratio"`` on
    ``k1 / (k1 + k2)``. Controls enter as ``x1 - x2`` differences. An
    intercept column is always first.
    """
    if spec not in ("diff", "ratio"):
        raise ValidationError(f"spec must be 'diff' or 'ratio', got {spec!r}")
    if not rows:
        raise ValidationError("no rows")
    n_cov = rows[0].x1.shape[0]
    if any(r.x1.shape[0] != n_cov for r in rows):
        raise ValidationError("rows carry covariate vectors of different lengths")

    k1 = np.array([r.k1 for r in rows], dtype=np.float64)
    k2 = np.array([r.k2 for r in rows], dtype=np.float64)
    y = np.array([r.y for r in rows], dtype=np.float64)
    if spec == "diff":
        k_term, k_name = k1 - k2, "k_diff"
    else:
        total = k1 + k2
        assert (total > 0).all(), "k1 + k2 must be positive"
        k_term, k_name = k1 / total, "k_ratio"

    columns = [np.ones(len(rows)), k_term]
    names = ["intercept", k_name]
    if with_controls:
        diffs = np.array([r.x1 - r.x2 for r in rows])
        columns.append(diffs)
        if n_cov == len(COVARIATE_NAMES):
            names.extend(f"d_{c}" for c in COVARIATE_NAMES)
        else:
            names.extend(f"d_x{i + 1}" for i in range(n_cov))
        x = np.column_stack(columns[:2] + [diffs])
    else:
        x = np.column_stack(columns)
    return x, y, names


def _bernoulli_ll(eta: np.ndarray, y: np.ndarray) -> float:
    # sum of y*eta - log(1 + exp(eta)), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _irls(x: np.ndarray, y: np.ndarray, max_iters: int, tol: float):
    """Newton/IRLS for the logit MLE with step-halving; returns
    (beta, ll, iterations, grad_max)."""
    n, p = x.shape
    beta = np.zeros(p)
    eta = x @ beta
    ll = _bernoulli_ll(eta, y)
    for iteration in range(1, max_iters + 1):
        prob = expit(eta)
        grad = x.T @ (y - prob)
        grad_max = float(np.max(np.abs(grad)))
        if grad_max < tol:
            return beta, ll, iteration - 1, grad_max
        if np.all(np.abs(y - prob) < 1e-8):
            raise SeparationError("perfectly separated data: fitted probabilities equal outcomes")
        if float(np.max(np.abs(beta))) > 1e8:
            raise SeparationError("diverging coefficients indicate (quasi-)separation")
        weights = prob * (1.0 - prob)
        hessian = (x * weights[:, None]).T @ x
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError(
                "singular information matrix (flat likelihood); data may be separated"
            ) from exc
        # Step-halve until the likelihood stops decreasing.
        for _ in range(40):
            candidate = beta + step
            eta_new = x @ candidate
            ll_new = _bernoulli_ll(eta_new, y)
            if ll_new >= ll - 1e-12:
                break
            step = step / 2.0
        beta, eta, ll = candidate, eta_new, ll_new
    raise ConvergenceError(f"IRLS did not converge in {max_iters} iterations")


def fit_logit(x: np.ndarray, y: np.ndarray, names: list[str] | None = None,
              max_iters: int = 100, tol: float = 1e-10, label: str = "",
              n_dropped: int = 0, info: dict | None = None) -> ModelFit:
    """Maximum-likelihood logit via IRLS.

    Standard errors come from the inverse observed information at the
    solution; the fit statistic is McFadden's pseudo-R-squared
    ``1 - ll / ll0`` with the null refit by the same routine, so an
    intercept-only model scores exactly 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValidationError(f"incompatible shapes {x.shape}, {y.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("y must be binary")
    n, p = x.shape
    if np.linalg.matrix_rank(x) < p:
        raise RankDeficiencyError("design matrix is rank deficient")

    beta, ll, iterations, grad_max = _irls(x, y, max_iters, tol)
    assert grad_max < tol, "score equations not solved to tolerance"

    prob = expit(x @ beta)
    information = (x * (prob * (1.0 - prob))[:, None]).T @ x
    cov = np.linalg.inv(information)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    p_values = 2.0 * spstats.norm.sf(np.abs(z))

    if p == 1 and np.ptp(x[:, 0]) == 0.0:
        ll0 = ll  # the model *is* the null model
    else:
        _, ll0, _, _ = _irls(np.ones((n, 1)), y, max_iters, tol)
    pseudo_r2 = 1.0 - ll / ll0 if ll0 != 0.0 else 0.0

    merged_info = {"ll": ll, "ll0": ll0, "grad_max": grad_max}
    merged_info.update(info or {})
    return ModelFit(
        names=tuple(names) if names else tuple(f"x{i}" for i in range(p)),
        estimates=beta,
        std_errors=se,
        statistics=z,
        p_values=p_values,
        n_obs=n,
        fit_stat=pseudo_r2,
        fit_stat_name="pseudo_r2",
        style="exp1",
        label=label,
        df_resid=None,
        n_dropped=n_dropped,
        converged=True,
        iterations=iterations,
        info=merged_info,
    )


# ---------------------------------------------------------------------------
# Shopping panel: fixed-effects OLS
# ---------------------------------------------------------------------------

def _group_demean(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups).astype(np.float64)
    if values.ndim == 1:
        sums = np.bincount(codes, weights=values, minlength=n_groups)
        return values - (sums / counts)[codes]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        sums = np.bincount(codes, weights=values[:, j], minlength=n_groups)
        out[:, j] = values[:, j] - (sums / counts)[codes]
    return out


def fit_fe_ols(rows: list[PanelRow], outcome: str = "purchase", *,
               brand_fe: bool = False, user_fe: bool = False,
               cluster_by_participant: bool = False, robust: bool = False,
               label: str = "", n_dropped: int = 0) -> ModelFit:
    """OLS of ``purchase`` or ``decision_time`` on (k/1000, price/1000, n_images).

    Participant effects are absorbed by the within transformation; brand
    effects enter as indicator columns (first brand as reference). Standard
    errors are classical by default, with degrees of freedom corrected for
    the absorbed group means so they match the dummy-variable regression
    exactly; ``robust`` switches to HC1 and ``cluster_by_participant`` to
    participant-clustered errors. R-squared is reported against the
    untransformed outcome, counting the fixed effects as explanatory.
    """
    if outcome not in ("purchase", "decision_time"):
        raise ValidationError(f"outcome must be 'purchase' or 'decision_time', got {outcome!r}")
    if not rows:
        raise ValidationError("no rows")

    y = np.array(
        [r.purchase if outcome == "purchase" else r.decision_time for r in rows],
        dtype=np.float64,
    )
    # Scaling per the reporting convention: k and price enter divided by 1,000.
    base = np.column_stack([
        np.array([r.k for r in rows], dtype=np.float64) / 1000.0,
        np.array([r.price for r in rows], dtype=np.float64) / 1000.0,
        np.array([r.n_images for r in rows], dtype=np.float64),
    ])
    names = ["k_per_1000", "price_per_1000", "n_images"]

    columns = [base]
    if brand_fe:
        brands = sorted({r.brand_id for r in rows})
        brand_idx = {b: i for i, b in enumerate(brands)}
        codes = np.array([brand_idx[r.brand_id] for r in rows])
        for i, b in enumerate(brands[1:], start=1):
            columns.append((codes == i).astype(np.float64)[:, None])
            names.append(f"brand[{b}]")
    x = np.hstack(columns)

    n = x.shape[0]
    df_absorbed = 0
    y_orig = y
    if user_fe:
        participants = sorted({r.participant_id for r in rows})
        pidx = {u: i for i, u in enumerate(participants)}
        pcodes = np.array([pidx[r.participant_id] for r in rows])
        n_groups = len(participants)
        y = _group_demean(y, pcodes, n_groups)
        x = _group_demean(x, pcodes, n_groups)
        df_absorbed = n_groups
    else:
        x = np.column_stack([np.ones(n), x])
        names = ["intercept"] + names
        df_absorbed = 0

    # A column that is constant (within every absorbed group) demeans to ~0.
    scales = np.linalg.norm(np.asarray(
        [[r.k, r.price, r.n_images] for r in rows], dtype=np.float64), axis=0)
    for j, name in enumerate(names):
        col_norm = float(np.linalg.norm(x[:, j]))
        ref = 1.0 if name == "intercept" else max(1.0, float(scales.max()))
        if col_norm <= 1e-12 * ref and name != "intercept":
            raise RankDeficiencyError(
                f"regressor {name!r} has no variation after demeaning", column=name
            )

    gram = x.T @ x
    eigvals = np.linalg.eigvalsh(gram)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1.0):
        raise RankDeficiencyError("design matrix is (numerically) rank deficient")
    beta = np.linalg.solve(gram, x.T @ y)
    resid = y - x @ beta
    rss = float(resid @ resid)
    df_resid = n - x.shape[1] - df_absorbed
    if df_resid <= 0:
        raise ValidationError(f"non-positive residual degrees of freedom ({df_resid})")

    gram_inv = np.linalg.inv(gram)
    if cluster_by_participant:
        pcodes_se = np.array(
            [r.participant_id for r in rows]
        )
        _, codes = np.unique(pcodes_se, return_inverse=True)
        n_clusters = int(codes.max()) + 1
        scores = x * resid[:, None]
        meat = np.zeros((x.shape[1], x.shape[1]))
        for g in range(n_clusters):
            sg = scores[codes == g].sum(axis=0)
            meat += np.outer(sg, sg)
        correction = (n_clusters / (n_clusters - 1)) * ((n - 1) / df_resid)
        cov = correction * gram_inv @ meat @ gram_inv
        df_inference = n_clusters - 1
    elif robust:
        meat = (x * (resid ** 2)[:, None]).T @ x
        cov = (n / df_resid) * gram_inv @ meat @ gram_inv  # HC1
        df_inference = df_resid
    else:
        cov = (rss / df_resid) * gram_inv
        df_inference = df_resid
    se = np.sqrt(np.diag(cov))
    t = beta / se
    p_values = 2.0 * spstats.t.sf(np.abs(t), df_inference)

    # With user FE the within residuals already equal the full-model
    # residuals, so R^2 against the raw outcome needs no refit.
    tss = float(np.sum((y_orig - y_orig.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0

    return ModelFit(
        names=tuple(names),
        estimates=beta,
        std_errors=se,
        statistics=t,
        p_values=p_values,
        n_obs=n,
        fit_stat=r2,
        fit_stat_name="r2",
        style="exp2",
        label=label,
        df_resid=df_resid,
        n_dropped=n_dropped,
        converged=True,
        iterations=0,
        info={
            "outcome": outcome,
            "brand_fe": brand_fe,
            "user_fe": user_fe,
            "absorbed_groups": df_absorbed,
            "rss": rss,
        },
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

_EXP1_TERMS = (("k_diff", "k1 - k2"), ("k_ratio", "k1 / (k1 + k2)"))
_EXP2_TERMS = (
    ("k_per_1000", "k (/1000)"),
    ("price_per_1000", "price (/1000)"),
    ("n_images", "n_images"),
)


def _term_cell(fit: ModelFit, term: str) -> tuple[str, str]:
    if term not in fit.names:
        return "", ""
    i = fit.names.index(term)
    est = f"{fit.estimates[i]:.4f}{significance_stars(float(fit.p_values[i]))}"
    se = f"({fit.std_errors[i]:.4f})"
    return est, se


def _render(header_rows, body_rows, widths) -> str:
    def fmt(cells):
        return "  ".join(str(c).rjust(w) if i else str(c).ljust(w)
                         for i, (c, w) in enumerate(zip(cells, widths)))
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    lines = [fmt(r) if r is not None else rule for r in header_rows + body_rows]
    return "\n".join(lines)


def _column_layout(fits, label_width):
    widths = [label_width] + [max(12, len(f.label) + 2) for f in fits]
    return widths


def report_table(fits: list[ModelFit], style: str) -> str:
    """Plain-text regression table: estimates with significance stars,
    standard errors in parentheses beneath, observation and fit-stat rows."""
    if style not in ("exp1", "exp2"):
        raise ValidationError(f"style must be 'exp1' or 'exp2', got {style!r}")
    if not fits:
        raise ValidationError("no fits")
    if any(f.style != style for f in fits):
        raise ValidationError("mixed fit styles in one report")

    if style == "exp1":
        return _report_exp1(fits)
    return _report_exp2(fits)


def _report_exp1(fits: list[ModelFit]) -> str:
    widths = _column_layout(fits, 24)
    header = [
        ["", *(f.label or f"({i + 1})" for i, f in enumerate(fits))],
        None,
    ]
    body = []
    for term, display in _EXP1_TERMS:
        if not any(term in f.names for f in fits):
            continue
        est_row = [display]
        se_row = [""]
        for f in fits:
            est, se = _term_cell(f, term)
            est_row.append(est)
            se_row.append(se)
        body.extend([est_row, se_row])
    body.append(["controls (x1 - x2)",
                 *("Yes" if f.info.get("controls") else "No" for f in fits)])
    body.append(None)
    body.append(["Num. Obs.", *(str(f.n_obs) for f in fits)])
    body.append(["pseudo-R2", *(f"{f.fit_stat:.3f}" for f in fits)])
    dropped = sum(f.n_dropped for f in fits[:1])
    if dropped:
        body.append([f"(dropped {dropped} rows with missing values)"])
    title = "outcome: set 1 judged more informative (logit)"
    return title + "\n" + _render(header, body, widths) + "\n"


def _report_exp2(fits: list[ModelFit]) -> str:
    blocks = []
    for outcome, panel in (("purchase", "Panel A: Purchase"),
                           ("decision_time", "Panel B: Decision Time (seconds)")):
        group = [f for f in fits if f.info.get("outcome") == outcome]
        if not group:
            continue
        widths = _column_layout(group, max(18, len(panel)))
        header = [[panel, *(f.label or f"({i + 1})" for i, f in enumerate(group))], None]
        body = []
        for term, display in _EXP2_TERMS:
            est_row, se_row = [display], [""]
            for f in group:
                est, se = _term_cell(f, term)
                est_row.append(est)
                se_row.append(se)
            body.extend([est_row, se_row])
        body.append(["Brand FE", *("Yes" if f.info.get("brand_fe") else "" for f in group)])
        body.append(["User FE", *("Yes" if f.info.get("user_fe") else "" for f in group)])
        body.append(None)
        body.append(["Num. Obs.", *(str(f.n_obs) for f in group)])
        body.append(["R2", *(f"{f.fit_stat:.3f}" for f in group)])
        blocks.append(_render(header, body, widths))
    notes = "Standard errors in parentheses. * p<0.1, ** p<0.05, *** p<0.01."
    return ("\n\n".join(blocks)) + "\n" + notes + "\n"


def report_csv(fits: list[ModelFit]) -> str:
    """Long-format CSV of every coefficient in every fit."""
    lines = ["label,term,estimate,std_error,statistic,p_value,n_obs,fit_stat_name,fit_stat"]
    for f in fits:
        for i, name in enumerate(f.names):
            lines.append(
                f"{f.label},{name},{float(f.estimates[i])!r},{float(f.std_errors[i])!r},"
                f"{float(f.statistics[i])!r},{float(f.p_values[i])!r},{f.n_obs},"
                f"{f.fit_stat_name},{float(f.fit_stat)!r}"
            )
    return "\n".join(lines) + "\n"


def fits_to_json(fits: list[ModelFit]) -> str:
    import json

    return json.dumps([f.to_dict() for f in fits], indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _require_columns(frame: pd.DataFrame, required, path) -> None:
    for column in required:
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing required column {column!r}", column=column)


def load_exp1_csv(path) -> tuple[list[ChoiceRow], int]:
    """Load choice rows; rows with missing values are dropped and counted."""
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    x1_cols = [f"x1_{c}" for c in COVARIATE_NAMES]
    x2_cols = [f"x2_{c}" for c in COVARIATE_NAMES]
    required = ["participant_id", "product_id", "y", "k1", "k2"] + x1_cols + x2_cols
    _require_columns(frame, required, path)
    used = frame[required]
    keep = used.notna().all(axis=1)
    n_dropped = int((~keep).sum())
    rows = [
        ChoiceRow(
            participant_id=str(r.participant_id),
            product_id=str(r.product_id),
            y=int(r.y),
            k1=int(r.k1),
            k2=int(r.k2),
            x1=np.array([getattr(r, c) for c in x1_cols], dtype=np.float64),
            x2=np.array([getattr(r, c) for c in x2_cols], dtype=np.float64),
        )
        for r in used[keep].itertuples(index=False)
    ]
    return rows, n_dropped


def load_exp2_csv(path) -> tuple[list[PanelRow], int]:
    """Load panel rows; rows with missing values are dropped and counted."""
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    _require_columns(frame, EXP2_COLUMNS, path)
    used = frame[list(EXP2_COLUMNS)]
    keep = used.notna().all(axis=1)
    n_dropped = int((~keep).sum())
    rows = [
        PanelRow(
            participant_id=str(r.participant_id),
            product_id=str(r.product_id),
            brand_id=str(r.brand_id),
            set_id=str(r.set_id),
            purchase=int(r.purchase),
            decision_time=float(r.decision_time_s),
            k=int(r.k),
            price=float(r.price),
            n_images=int(r.n_images),
        )
        for r in used[keep].itertuples(index=False)
    ]
    return rows, n_dropped
