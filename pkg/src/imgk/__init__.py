"""Information-richness scoring for image sets via patch-embedding clustering.

The pipeline stacks per-image patch-embedding matrices, reduces them with
PCA, and selects the cluster count k* that maximizes the mean silhouette over
repeated seeded k-means restarts; k* is the set's score. Companion modules
fit the validation logit and the purchase/decision-time fixed-effects
regressions, and generate synthetic data with known ground truth so the whole
chain is verifiable offline.
"""

__version__ = "0.1.0"

from .cluster import Clustering, SilhouetteSummary, avg_silhouette, kmeans, silhouette
from .embeddings import (
    ImageSetManifest,
    PatchEmbeddings,
    StackedSet,
    load_store,
    read_embeddings,
    stack_set,
    write_embeddings,
)
from .errors import (
    ConvergenceError,
    ImgkError,
    InfeasibleSpecError,
    KembError,
    PipelineStageError,
    RankDeficiencyError,
    SchemaError,
    SeparationError,
    ValidationError,
    ZeroVarianceError,
)
from .ksearch import KStarResult, SearchConfig, StopReason, dump_trace, find_k_star, load_trace
from .pca import PcaModel, fit_pca, transform, variance_report
from .pipeline import (
    CorpusResult,
    KValue,
    PipelineConfig,
    score_corpus,
    score_set,
    write_index_csv,
    write_kvalues_jsonl,
)

__all__ = [name for name in dir() if not name.startswith("_")]
