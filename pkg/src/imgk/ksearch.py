"""Grid search over k with a patience stopping rule and argmax selection.

The grid is ``k_min, k_min + step, ...`` truncated at ``min(k_max, n - 1)``.
Evaluations run in ascending order; the search stops once ``patience``
consecutive evaluations fail to strictly exceed the best mean silhouette
recorded so far (equal scores consume patience), or when the grid runs out.
The selected k* is the evaluated k with the highest mean silhouette, ties
broken toward the smallest k.

Patience counts evaluated grid points, not unit increments of k: with the
default step of 3, a patience of 100 spans 300 in k-space.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .cluster import SilhouetteSummary, avg_silhouette, pairwise_distances
from .errors import ValidationError
from .seeds import derive_seed

__all__ = [
    "SearchConfig",
    "StopReason",
    "TraceEntry",
    "KStarResult",
    "find_k_star",
    "dump_trace",
    "load_trace",
]

K_MAX_BACKSTOP = 1000


class StopReason(enum.Enum):
    PATIENCE_EXHAUSTED = "patience_exhausted"
    K_MAX_REACHED = "k_max_reached"
    GRID_EXHAUSTED = "grid_exhausted"


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the k search; ``k_max=None`` resolves to ``min(n-1, 1000)``."""

    k_min: int = 2
    k_max: int | None = None
    step: int = 3
    patience: int = 100
    n_runs: int = 30
    base_seed: int = 0
    max_iters: int = 300
    tol: float = 1e-6
    workers: int = 1

    def validate(self) -> None:
        if self.k_min < 2:
            raise ValidationError(f"k_min must be >= 2, got {self.k_min}")
        if self.k_max is not None and self.k_max < self.k_min:
            raise ValidationError(f"k_max {self.k_max} < k_min {self.k_min}")
        if self.step < 1:
            raise ValidationError(f"step must be >= 1, got {self.step}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if self.n_runs < 1:
            raise ValidationError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True, eq=False)
class TraceEntry:
    k: int
    mean_score: float
    run_scores: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class KStarResult:
    """Selected k* plus the full, replayable search trace."""

    k_star: int
    trace: tuple[TraceEntry, ...]
    stop_reason: StopReason
    config: SearchConfig

    @property
    def best_score(self) -> float:
        return max(e.mean_score for e in self.trace)


Evaluator = Callable[[np.ndarray, int, SearchConfig], SilhouetteSummary]


def _default_evaluator(dist: np.ndarray) -> Evaluator:
    def evaluate(points: np.ndarray, k: int, cfg: SearchConfig) -> SilhouetteSummary:
        # Per-k seed stream, so the trace under a larger patience is a strict
        # prefix-extension of the trace under a smaller one.
        return avg_silhouette(
            points, k, cfg.n_runs, derive_seed(cfg.base_seed, k),
            max_iters=cfg.max_iters, tol=cfg.tol, workers=cfg.workers, dist=dist,
        )
    return evaluate


def find_k_star(points: np.ndarray, config: SearchConfig | None = None,
                evaluate: Evaluator | None = None) -> KStarResult:
    """Run the patience-bounded grid search and return the argmax k*."""
    cfg = config or SearchConfig()
    cfg.validate()
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        raise ValidationError(f"need n >= 3 points, got {n}")
    k_cap = cfg.k_max if cfg.k_max is not None else min(n - 1, K_MAX_BACKSTOP)
    cfg = replace(cfg, k_max=k_cap)
    if cfg.k_min > min(k_cap, n - 1):
        raise ValidationError(
            f"empty feasible grid: k_min={cfg.k_min}, k_max={k_cap}, n-1={n - 1}"
        )
    if evaluate is None:
        evaluate = _default_evaluator(pairwise_distances(x))

    trace: list[TraceEntry] = []
    best_score = -np.inf
    best_k = -1
    since_improve = 0
    k = cfg.k_min
    while True:
        summary = evaluate(x, k, cfg)
        trace.append(TraceEntry(k=k, mean_score=summary.mean_score,
                                run_scores=summary.per_run_scores))
        if summary.mean_score > best_score:
            best_score = summary.mean_score
            best_k = k
            since_improve = 0
        else:
            since_improve += 1
        if since_improve >= cfg.patience:
            stop = StopReason.PATIENCE_EXHAUSTED
            break
        next_k = k + cfg.step
        if next_k > n - 1:
            stop = StopReason.GRID_EXHAUSTED
            break
        if next_k > k_cap:
            # Exact coverage of [k_min, k_max] counts as an exhausted grid;
            # stepping over the cap mid-stride reports the cap itself.
            stop = StopReason.GRID_EXHAUSTED if k == k_cap else StopReason.K_MAX_REACHED
            break
        k = next_k

    return KStarResult(k_star=best_k, trace=tuple(trace), stop_reason=stop, config=cfg)


def dump_trace(result: KStarResult, path) -> None:
    """Write the trace as CSV (k, silh_k, run_1..run_N) plus a JSON sidecar.

    Floats are written with shortest round-trip ``repr``, so a reload
    reproduces every score bitwise. The sidecar (same stem, ``.json``) records
    the config, stop reason, and k*.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        n_runs = result.trace[0].run_scores.shape[0]
        writer.writerow(["k", "silh_k"] + [f"run_{i + 1}" for i in range(n_runs)])
        for entry in result.trace:
            writer.writerow(
                [entry.k, repr(entry.mean_score)]
                + [repr(float(v)) for v in entry.run_scores]
            )
    sidecar = {
        "k_star": result.k_star,
        "stop_reason": result.stop_reason.value,
        "config": asdict(result.config),
    }
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_trace(path) -> KStarResult:
    """Reload a dumped trace; bitwise inverse of ``dump_trace``."""
    path = Path(path)
    entries = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for row in reader:
            entries.append(
                TraceEntry(
                    k=int(row[0]),
                    mean_score=float(row[1]),
                    run_scores=np.array([float(v) for v in row[2:]], dtype=np.float64),
                )
            )
    sidecar = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    return KStarResult(
        k_star=int(sidecar["k_star"]),
        trace=tuple(entries),
        stop_reason=StopReason(sidecar["stop_reason"]),
        config=SearchConfig(**sidecar["config"]),
    )
