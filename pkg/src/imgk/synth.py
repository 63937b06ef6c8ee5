"""Deterministic generators with known ground truth.

These are the oracles the test and validation harnesses lean on: Gaussian
mixtures with a known component count (for k* recovery), logit choice data
with known coefficients, and fixed-effects panels with known slopes. Every
generator is a pure function of its spec and seed; magnitudes default to the
scales the scoring pipeline produces in practice (k* in the tens-to-hundreds,
prices under 1,000, panels of thousands of rows) without claiming to mimic
any particular dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InfeasibleSpecError, ValidationError
from .seeds import generator
from .stats import COVARIATE_NAMES, ChoiceRow, PanelRow

__all__ = ["MixtureSpec", "gen_mixture", "gen_choice_data", "gen_panel"]

# Rejection sampling keeps component centers at least this many within-stds apart.
MIN_CENTER_SEPARATION = 6.0
N_BRANDS = 6
K_RANGE = (50, 500)


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture with known component count.

    ``points_per_component`` is an int (balanced) or a per-component tuple.
    Centers are drawn uniformly in a ball of radius ``center_scale`` with
    pairwise distance >= 6 * ``within_std`` enforced by rejection.
    """

    k_true: int
    points_per_component: int | tuple[int, ...]
    dim: int
    center_scale: float
    within_std: float
    seed: int = 0

    def counts(self) -> tuple[int, ...]:
        if isinstance(self.points_per_component, int):
            return (self.points_per_component,) * self.k_true
        return tuple(self.points_per_component)

    @property
    def separation_ratio(self) -> float:
        return self.center_scale / self.within_std if self.within_std > 0 else np.inf

    def validate(self) -> None:
        if self.k_true < 1:
            raise ValidationError(f"k_true must be >= 1, got {self.k_true}")
        counts = self.counts()
        if len(counts) != self.k_true or any(c < 1 for c in counts):
            raise ValidationError(f"bad points_per_component {counts} for k_true={self.k_true}")
        if self.dim < 1 or self.center_scale <= 0 or self.within_std < 0:
            raise ValidationError("dim must be >= 1, center_scale > 0, within_std >= 0")


def gen_mixture(spec: MixtureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample (points, labels); labels are sorted component indices."""
    spec.validate()
    rng = generator(spec.seed)
    min_dist = MIN_CENTER_SEPARATION * spec.within_std

    centers = np.empty((spec.k_true, spec.dim))
    placed = 0
    attempts = 0
    max_attempts = 1000 * spec.k_true
    while placed < spec.k_true:
        if attempts >= max_attempts:
            raise InfeasibleSpecError(
                f"could not place {spec.k_true} centers with pairwise distance "
                f">= {min_dist:g} in a ball of radius {spec.center_scale:g}"
            )
        attempts += 1
        direction = rng.standard_normal(spec.dim)
        direction /= np.linalg.norm(direction)
        radius = spec.center_scale * rng.random() ** (1.0 / spec.dim)
        candidate = radius * direction
        if placed and np.linalg.norm(centers[:placed] - candidate, axis=1).min() < min_dist:
            continue
        centers[placed] = candidate
        placed += 1

    counts = spec.counts()
    points = np.vstack([
        centers[c] + spec.within_std * rng.standard_normal((m, spec.dim))
        for c, m in enumerate(counts)
    ])
    labels = np.repeat(np.arange(spec.k_true, dtype=np.int64), counts)
    if spec.k_true > 1:
        gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        np.fill_diagonal(gaps, np.inf)
        assert gaps.min() >= min_dist, "separation guarantee violated"
    return points, labels


def gen_choice_data(beta, n: int, spec: str = "diff", seed: int = 0) -> list[ChoiceRow]:
    """Binary choice rows whose outcome follows a known logit model.

    The latent design is [intercept, k-term per ``spec``, 9 covariate
    differences]; ``beta`` may be shorter than 11 and is zero-padded, so a
    2-vector drives the outcome through the k-term alone while the rows still
    carry covariates.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if spec not in ("diff", "ratio"):
        raise ValidationError(f"spec must be 'diff' or 'ratio', got {spec!r}")
    beta = np.asarray(beta, dtype=np.float64)
    width = 2 + len(COVARIATE_NAMES)
    if beta.shape[0] > width:
        raise ValidationError(f"beta longer than design width {width}")
    full_beta = np.zeros(width)
    full_beta[: beta.shape[0]] = beta

    rng = generator(seed)
    k1 = rng.integers(K_RANGE[0], K_RANGE[1] + 1, size=n)
    k2 = rng.integers(K_RANGE[0], K_RANGE[1] + 1, size=n)
    x1 = rng.standard_normal((n, len(COVARIATE_NAMES)))
    x2 = rng.standard_normal((n, len(COVARIATE_NAMES)))
    k_term = (k1 - k2).astype(np.float64) if spec == "diff" else k1 / (k1 + k2)
    design = np.column_stack([np.ones(n), k_term, x1 - x2])
    y = (rng.random(n) < expit(design @ full_beta)).astype(np.int64)

    return [
        ChoiceRow(
            participant_id=f"user{i // 10:04d}",
            product_id=f"prod{i:05d}",
            y=int(y[i]),
            k1=int(k1[i]),
            k2=int(k2[i]),
            x1=x1[i].copy(),
            x2=x2[i].copy(),
        )
        for i in range(n)
    ]


def gen_panel(beta, n_users: int, products_per_user: int, fe_std: float = 0.0,
              noise_std: float = 0.0, seed: int = 0,
              outcome: str = "linear") -> list[PanelRow]:
    """Participant-by-product panel with known slopes on (k/1000, price/1000, n_images).

    A shared pool of products (each with a brand out of 6, a price, and two
    image sets) is sampled without replacement per user. With
    ``outcome="linear"`` the target is the decision-time field:
    ``30 + x @ beta + user_effect + brand_effect + noise``; the purchase field
    is an independent Bernoulli(0.3) filler. With ``outcome="binary"`` the
    purchase probability is ``0.5 + x @ beta + effects`` (clipped to
    [0.01, 0.99]), so the implied linear-probability slopes equal ``beta``
    whenever clipping is negligible; decision time becomes a positive filler.
    """
    if n_users < 1 or products_per_user < 1:
        raise ValidationError("n_users and products_per_user must be >= 1")
    if outcome not in ("linear", "binary"):
        raise ValidationError(f"outcome must be 'linear' or 'binary', got {outcome!r}")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (3,):
        raise ValidationError(f"beta must have 3 slopes, got shape {beta.shape}")

    rng = generator(seed)
    n_products = max(100, products_per_user)
    product_brand = rng.integers(N_BRANDS, size=n_products)
    product_price = rng.uniform(1.0, 1000.0, size=n_products)
    set_k = rng.integers(K_RANGE[0], K_RANGE[1] + 1, size=(n_products, 2))
    set_n_images = rng.integers(1, 6, size=(n_products, 2))
    brand_effects = rng.normal(0.0, fe_std, size=N_BRANDS)
    user_effects = rng.normal(0.0, fe_std, size=n_users)

    rows: list[PanelRow] = []
    for u in range(n_users):
        chosen = rng.choice(n_products, size=products_per_user, replace=False)
        sides = rng.integers(2, size=products_per_user)
        noise = rng.normal(0.0, noise_std, size=products_per_user)
        fillers = rng.random(products_per_user)
        for j, (p, s) in enumerate(zip(chosen, sides)):
            k = int(set_k[p, s])
            price = float(product_price[p])
            n_img = int(set_n_images[p, s])
            index = (
                beta[0] * (k / 1000.0)
                + beta[1] * (price / 1000.0)
                + beta[2] * n_img
                + user_effects[u]
                + brand_effects[product_brand[p]]
            )
            if outcome == "linear":
                decision_time = 30.0 + index + noise[j]
                purchase = int(fillers[j] < 0.3)
            else:
                prob = float(np.clip(0.5 + index, 0.01, 0.99))
                purchase = int(fillers[j] < prob)
                decision_time = 2.0 + 58.0 * float(rng.random())
            rows.append(
                PanelRow(
                    participant_id=f"user{u:04d}",
                    product_id=f"prod{p:04d}",
                    brand_id=f"brand{product_brand[p]}",
                    set_id=f"prod{p:04d}_s{s + 1}",
                    purchase=purchase,
                    decision_time=float(decision_time),
                    k=k,
                    price=price,
                    n_images=n_img,
                )
            )
    return rows
