"""End-to-end scoring: manifest -> stack -> PCA -> k* search -> KValue.

``score_set`` runs one image set through the whole chain and tags any failure
with the stage it happened in. ``score_corpus`` maps it over many manifests,
optionally in parallel, isolating per-set failures so one corrupt file never
aborts a batch.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .embeddings import ImageSetManifest, PatchEmbeddings, stack_set
from .errors import ImgkError, PipelineStageError
from .ksearch import KStarResult, SearchConfig, find_k_star
from .pca import fit_pca, transform, variance_report

__all__ = [
    "PipelineConfig",
    "KValue",
    "CorpusResult",
    "score_set",
    "score_corpus",
    "write_kvalues_jsonl",
    "write_index_csv",
]

DEFAULT_PCA_COMPONENTS = 100


@dataclass(frozen=True)
class PipelineConfig:
    """Scoring configuration; hashed into every KValue for provenance."""

    pca_components: int = DEFAULT_PCA_COMPONENTS
    search: SearchConfig = field(default_factory=SearchConfig)

    def to_dict(self) -> dict:
        return {"pca_components": self.pca_components, "search": asdict(self.search)}

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class KValue:
    """One image set's information-richness score with its search provenance."""

    set_id: str
    k_star: int
    n_images: int
    n_points: int
    l_eff: int
    pca_cumvar_at_l: float
    search: KStarResult
    pipeline_config_hash: str

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "k_star": self.k_star,
            "n_images": self.n_images,
            "n_points": self.n_points,
            "l_eff": self.l_eff,
            "pca_cumvar_at_l": self.pca_cumvar_at_l,
            "pipeline_config_hash": self.pipeline_config_hash,
            "stop_reason": self.search.stop_reason.value,
            "search_config": asdict(self.search.config),
            "trace": [
                {
                    "k": e.k,
                    "silh_k": e.mean_score,
                    "runs": [float(v) for v in e.run_scores],
                }
                for e in self.search.trace
            ],
        }


@dataclass(frozen=True)
class SetFailure:
    set_id: str
    stage: str
    message: str


@dataclass(frozen=True)
class CorpusResult:
    """Batch outcome: scored sets in input order plus a failure ledger."""

    values: tuple[KValue, ...]
    failures: tuple[SetFailure, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ImgkError as exc:
        raise PipelineStageError(name, exc) from exc


def score_set(manifest: ImageSetManifest,
              store: Mapping[str, PatchEmbeddings],
              config: PipelineConfig | None = None) -> KValue:
    """Score one image set; deterministic given (manifest, store, config)."""
    cfg = config or PipelineConfig()
    stacked = _stage("stack", stack_set, manifest, store)
    model = _stage("pca", fit_pca, stacked.points, cfg.pca_components)
    reduced = _stage("pca", transform, model, stacked.points)
    result = _stage("ksearch", find_k_star, reduced, cfg.search)
    cumvar = float(variance_report(model)[-1])
    return KValue(
        set_id=manifest.set_id,
        k_star=result.k_star,
        n_images=len(manifest.image_ids),
        n_points=stacked.n_points,
        l_eff=model.l_eff,
        pca_cumvar_at_l=cumvar,
        search=result,
        pipeline_config_hash=cfg.hash(),
    )


def score_corpus(manifests: list[ImageSetManifest],
                 store: Mapping[str, PatchEmbeddings],
                 config: PipelineConfig | None = None,
                 parallelism: int = 1) -> CorpusResult:
    """Score every manifest; per-set failures are collected, not fatal.

    Results are identical to a sequential map in manifest order, whatever the
    ``parallelism``.
    """
    cfg = config or PipelineConfig()

    def one(manifest: ImageSetManifest):
        try:
            return score_set(manifest, store, cfg), None
        except PipelineStageError as exc:
            return None, SetFailure(manifest.set_id, exc.stage, str(exc.cause))

    if parallelism <= 1:
        outcomes = [one(m) for m in manifests]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(one, manifests))

    values = tuple(v for v, _ in outcomes if v is not None)
    failures = tuple(f for _, f in outcomes if f is not None)
    return CorpusResult(values=values, failures=failures)


def write_kvalues_jsonl(values, path) -> None:
    """One compact JSON record per KValue, in corpus order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for value in values:
            fh.write(json.dumps(value.to_dict(), sort_keys=True) + "\n")


def write_index_csv(values, path) -> None:
    """Join-friendly index: set_id, k_star, n_images, cumvar."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set_id", "k_star", "n_images", "cumvar"])
        for value in values:
            writer.writerow(
                [value.set_id, value.k_star, value.n_images, repr(value.pca_cumvar_at_l)]
            )
