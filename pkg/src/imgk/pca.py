"""Centering + top-L principal-component projection of a stacked point matrix.

The fit runs a thin SVD of the centered matrix (better conditioned than an
explicit covariance for wide inputs); explained-variance ratios are the
component eigenvalues over the total sample variance, so they agree with a
full covariance eigendecomposition. Component signs are normalized so each
row's largest-magnitude entry is positive, making fits reproducible across
platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, ZeroVarianceError

__all__ = ["PcaModel", "fit_pca", "transform", "variance_report"]

# Relative floor below which total variance counts as zero: catches exactly
# repeated rows even after float roundoff in the mean, without tripping on
# genuinely tiny-scale data.
_ZERO_VARIANCE_REL = 1e-20


@dataclass(frozen=True)
class PcaModel:
    """Fitted projection: ``mean`` (D,), orthonormal ``components`` (L_eff, D),
    and per-component ``explained_variance_ratio`` summing to at most 1."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    n_fit: int

    @property
    def l_eff(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean.tolist(),
                "components": self.components.tolist(),
                "explained_variance_ratio": self.explained_variance_ratio.tolist(),
                "n_fit": self.n_fit,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        raw = json.loads(text)
        return cls(
            mean=np.asarray(raw["mean"], dtype=np.float64),
            components=np.asarray(raw["components"], dtype=np.float64),
            explained_variance_ratio=np.asarray(
                raw["explained_variance_ratio"], dtype=np.float64
            ),
            n_fit=int(raw["n_fit"]),
        )


def fit_pca(points: np.ndarray, l_components: int) -> PcaModel:
    """Fit a PCA model retaining ``min(l_components, n-1, D)`` components.

    Components are the descending-eigenvalue eigenvectors of the sample
    covariance of the centered points. All-constant input raises
    ``ZeroVarianceError`` (a zero-variance embedding set indicates an
    upstream extraction bug rather than a valid degenerate model).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValidationError(f"need at least 2 rows to fit, got {n}")
    if l_components < 1:
        raise ValidationError(f"l_components must be >= 1, got {l_components}")
    if not np.isfinite(x).all():
        raise ValidationError("non-finite entries in points")

    mean = x.mean(axis=0)
    centered = x - mean
    total_var = float((centered * centered).sum()) / (n - 1)
    mean_square = float((x * x).mean())
    if total_var <= 0.0 or total_var <= mean_square * _ZERO_VARIANCE_REL:
        raise ZeroVarianceError("points have zero variance (all rows identical)")

    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    l_eff = min(l_components, n - 1, d)
    components = vt[:l_eff].copy()
    eigenvalues = (singular[:l_eff] ** 2) / (n - 1)

    # Sign convention: largest-magnitude entry of each component is positive.
    pivot = np.argmax(np.abs(components), axis=1)
    flip = components[np.arange(l_eff), pivot] < 0
    components[flip] *= -1.0

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance_ratio=eigenvalues / total_var,
        n_fit=n,
    )


def transform(model: PcaModel, points: np.ndarray) -> np.ndarray:
    """Project rows onto the fitted components: row i -> components @ (x_i - mean)."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValidationError(
            f"expected shape (m, {model.dim}), got {x.shape}"
        )
    return (x - model.mean) @ model.components.T


def variance_report(model: PcaModel) -> np.ndarray:
    """Cumulative explained-variance curve; monotone, last value <= 1."""
    # Clip the float-roundoff overshoot above 1 (ratios may sum to 1 + ~1e-16).
    return np.minimum(np.cumsum(model.explained_variance_ratio), 1.0)
