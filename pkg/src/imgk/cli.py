"""``imgk`` command line: score, regress, synth, validate, trace.

Every run writes its effective configuration as JSON into the output
directory, so results are reproducible from the echo alone. Exit codes:
0 success, 1 computation failure, 2 usage or I/O error. The environment
variable ``IMGK_THREADS`` caps all parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import (
    ImageSetManifest,
    PatchEmbeddings,
    read_embeddings,
    write_embeddings,
)
from .errors import ImgkError, SchemaError, ValidationError
from .ksearch import SearchConfig, dump_trace, load_trace
from .seeds import derive_seed, generator
from .pipeline import PipelineConfig, score_corpus, write_index_csv, write_kvalues_jsonl
from .stats import (
    COVARIATE_NAMES,
    build_exp1_design,
    fit_fe_ols,
    fit_logit,
    fits_to_json,
    load_exp1_csv,
    load_exp2_csv,
    report_csv,
    report_table,
)
from .synth import MixtureSpec, gen_choice_data, gen_mixture, gen_panel
from .validate import run_all

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2


def _thread_cap(requested: int) -> int:
    cap = os.environ.get("IMGK_THREADS")
    if cap:
        return max(1, min(requested, int(cap)))
    return max(1, requested)


def _echo_config(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"imgk_version": __version__, **payload}
    (out_dir / "config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def _search_config(args, seed: int) -> SearchConfig:
    return SearchConfig(
        k_min=args.k_min,
        k_max=args.k_max,
        step=args.step,
        patience=args.patience,
        n_runs=args.restarts,
        base_seed=seed,
        workers=_thread_cap(args.workers),
    )


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def cmd_score(args) -> int:
    store_dir = Path(args.store)
    if not store_dir.is_dir():
        print(f"error: store not found: {store_dir}", file=sys.stderr)
        return EXIT_USAGE
    manifest_path = Path(args.manifests)
    if manifest_path.is_dir():
        manifest_files = sorted(manifest_path.glob("*.json"))
    elif manifest_path.is_file():
        manifest_files = [manifest_path]
    else:
        print(f"error: manifests not found: {manifest_path}", file=sys.stderr)
        return EXIT_USAGE
    if not manifest_files:
        print(f"error: no manifest JSON files under {manifest_path}", file=sys.stderr)
        return EXIT_USAGE

    try:
        manifests = [ImageSetManifest.load(p) for p in manifest_files]
    except ImgkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    # Load store files one by one: a corrupt KEMB must only fail the sets
    # that reference it, never the whole batch.
    store: dict[str, PatchEmbeddings] = {}
    corrupt: list[tuple[str, str]] = []
    for kemb_path in sorted(store_dir.glob("*.kemb")):
        try:
            e = read_embeddings(kemb_path)
        except ImgkError as exc:
            corrupt.append((kemb_path.name, str(exc)))
            print(f"warning: unreadable store file {kemb_path.name}: {exc}",
                  file=sys.stderr)
            continue
        store[e.image_id] = e

    config = PipelineConfig(pca_components=args.pca_l, search=_search_config(args, args.seed))
    out_dir = Path(args.out)
    _echo_config(out_dir, {
        "subcommand": "score",
        "manifests": [str(p) for p in manifest_files],
        "store": str(store_dir),
        "seed": args.seed,
        "parallelism": _thread_cap(args.parallelism),
        "pipeline": config.to_dict(),
        "pipeline_config_hash": config.hash(),
    })

    result = score_corpus(manifests, store, config, parallelism=_thread_cap(args.parallelism))

    write_kvalues_jsonl(result.values, out_dir / "kvalues.jsonl")
    write_index_csv(result.values, out_dir / "index.csv")
    traces = out_dir / "traces"
    traces.mkdir(exist_ok=True)
    for value in result.values:
        dump_trace(value.search, traces / f"{_safe_name(value.set_id)}.csv")
        print(f"scored {value.set_id}: k_star={value.k_star} "
              f"(n_points={value.n_points}, cumvar@L={value.pca_cumvar_at_l:.3f})")

    if result.failures:
        with (out_dir / "failures.csv").open("w", encoding="utf-8") as fh:
            fh.write("set_id,stage,message\n")
            for failure in result.failures:
                msg = failure.message.replace('"', "'")
                fh.write(f'{failure.set_id},{failure.stage},"{msg}"\n')
        for failure in result.failures:
            print(f"FAILED {failure.set_id} [{failure.stage}]: {failure.message}",
                  file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------

def _regress_exp1(rows, n_dropped):
    fits = []
    for i, (spec, controls) in enumerate(
        [("diff", False), ("diff", True), ("ratio", False), ("ratio", True)]
    ):
        x, y, names = build_exp1_design(rows, spec=spec, with_controls=controls)
        fits.append(
            fit_logit(x, y, names, label=f"({i + 1})", n_dropped=n_dropped,
                      info={"controls": controls})
        )
    return fits


def _regress_exp2(rows, n_dropped):
    fits = []
    for outcome in ("purchase", "decision_time"):
        for i, (brand, user) in enumerate([(False, False), (True, False), (True, True)]):
            fits.append(
                fit_fe_ols(rows, outcome=outcome, brand_fe=brand, user_fe=user,
                           label=f"({i + 1})", n_dropped=n_dropped)
            )
    return fits


def cmd_regress(args) -> int:
    input_path = Path(args.input)
    if not input_path.is_file():
        print(f"error: input not found: {input_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.mode == "exp1":
            rows, n_dropped = load_exp1_csv(input_path)
            fits = _regress_exp1(rows, n_dropped)
        else:
            rows, n_dropped = load_exp2_csv(input_path)
            fits = _regress_exp2(rows, n_dropped)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ImgkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    report = report_table(fits, style=args.mode)
    if n_dropped:
        report += f"(dropped {n_dropped} rows with missing values)\n"
    print(report)
    if args.out:
        out_dir = Path(args.out)
        _echo_config(out_dir, {"subcommand": "regress", "mode": args.mode,
                               "input": str(input_path)})
        (out_dir / "report.txt").write_text(report, encoding="utf-8")
        (out_dir / "coefficients.csv").write_text(report_csv(fits), encoding="utf-8")
        (out_dir / "fits.json").write_text(fits_to_json(fits) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _parse_counts(text: str):
    if "," in text:
        return tuple(int(v) for v in text.split(","))
    return int(text)


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.kind == "mixture":
        spec = MixtureSpec(
            k_true=args.k_true,
            points_per_component=_parse_counts(args.points_per_component),
            dim=args.dim,
            center_scale=args.center_scale,
            within_std=args.within_std,
            seed=args.seed,
        )
        points, labels = gen_mixture(spec)
        n = points.shape[0]
        if n < args.images:
            print(f"error: {n} points cannot fill {args.images} pseudo-images",
                  file=sys.stderr)
            return EXIT_USAGE
        order = generator(derive_seed(args.seed, 1)).permutation(n)
        points, labels = points[order], labels[order]

        store = out / "store"
        store.mkdir(parents=True, exist_ok=True)
        bounds = np.linspace(0, n, args.images + 1).astype(int)
        image_ids = []
        for i in range(args.images):
            image_id = f"img_{i:03d}"
            image_ids.append(image_id)
            write_embeddings(
                PatchEmbeddings(image_id, points[bounds[i]:bounds[i + 1]].astype(np.float32),
                                "synthetic-mixture-v1"),
                store / f"{image_id}.kemb",
            )
        manifest = ImageSetManifest(
            set_id=f"mixture_k{args.k_true}",
            image_ids=tuple(image_ids),
            notes=f"synthetic mixture, k_true={args.k_true}, seed={args.seed}",
        )
        manifest.save(out / "manifest.json")
        with (out / "labels.csv").open("w", encoding="utf-8") as fh:
            fh.write("row,image_id,component\n")
            for row in range(n):
                image = int(np.searchsorted(bounds, row, side="right") - 1)
                fh.write(f"{row},img_{image:03d},{labels[row]}\n")
        _echo_config(out, {"subcommand": "synth", "kind": "mixture",
                           "spec": asdict(spec), "images": args.images})
        print(f"wrote {args.images} pseudo-image(s), manifest, labels to {out}")
    elif args.kind == "choice":
        rows = gen_choice_data(beta=[float(b) for b in args.beta.split(",")],
                               n=args.n, spec=args.spec, seed=args.seed)
        out.parent.mkdir(parents=True, exist_ok=True)
        header = (
            ["participant_id", "product_id", "y", "k1", "k2"]
            + [f"x1_{c}" for c in COVARIATE_NAMES]
            + [f"x2_{c}" for c in COVARIATE_NAMES]
        )
        with out.open("w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                cells = [r.participant_id, r.product_id, str(r.y), str(r.k1), str(r.k2)]
                cells += [repr(float(v)) for v in r.x1] + [repr(float(v)) for v in r.x2]
                fh.write(",".join(cells) + "\n")
        print(f"wrote {len(rows)} choice rows to {out}")
    else:  # panel
        rows = gen_panel(beta=[float(b) for b in args.beta.split(",")],
                         n_users=args.users, products_per_user=args.products_per_user,
                         fe_std=args.fe_std, noise_std=args.noise_std,
                         seed=args.seed, outcome=args.outcome)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", encoding="utf-8") as fh:
            fh.write("participant_id,product_id,brand_id,set_id,purchase,"
                     "decision_time_s,k,price,n_images\n")
            for r in rows:
                fh.write(f"{r.participant_id},{r.product_id},{r.brand_id},{r.set_id},"
                         f"{r.purchase},{r.decision_time!r},{r.k},{r.price!r},{r.n_images}\n")
        print(f"wrote {len(rows)} panel rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate / trace
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    results = run_all(quick=args.quick)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail} ({r.seconds:.1f}s)")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_COMPUTE


def cmd_trace(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        print(f"error: trace not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    result = load_trace(path)
    best = result.best_score
    print(f"k* = {result.k_star}   stop: {result.stop_reason.value}   "
          f"grid: k_min={result.config.k_min} step={result.config.step} "
          f"k_max={result.config.k_max} patience={result.config.patience}")
    print(f"{'k':>6}  {'silh_k':>10}  {'min run':>10}  {'max run':>10}")
    for entry in result.trace:
        marker = "  <-- k*" if entry.k == result.k_star and entry.mean_score == best else ""
        print(f"{entry.k:>6}  {entry.mean_score:>10.6f}  "
              f"{entry.run_scores.min():>10.6f}  {entry.run_scores.max():>10.6f}{marker}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imgk",
        description="Cluster-count scoring of image-set patch embeddings, "
                    "companion regressions, and synthetic validation.",
    )
    parser.add_argument("--version", action="version", version=f"imgk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    score = sub.add_parser("score", help="score image sets from KEMB files")
    score.add_argument("--manifests", required=True,
                       help="manifest JSON file, or directory of them")
    score.add_argument("--store", required=True, help="directory of .kemb files")
    score.add_argument("--out", required=True, help="output directory for this run")
    score.add_argument("--seed", type=int, default=0)
    score.add_argument("--pca-l", type=int, default=100)
    score.add_argument("--k-min", type=int, default=2)
    score.add_argument("--k-max", type=int, default=None)
    score.add_argument("--step", type=int, default=3)
    score.add_argument("--patience", type=int, default=100)
    score.add_argument("--restarts", type=int, default=30)
    score.add_argument("--workers", type=int, default=1,
                       help="threads per k evaluation")
    score.add_argument("--parallelism", type=int, default=1,
                       help="image sets scored concurrently")
    score.set_defaults(func=cmd_score)

    regress = sub.add_parser("regress", help="fit the choice or panel regressions")
    regress.add_argument("--mode", choices=["exp1", "exp2"], required=True)
    regress.add_argument("--input", required=True, help="exp1.csv or exp2.csv")
    regress.add_argument("--out", default=None, help="optional output directory")
    regress.set_defaults(func=cmd_regress)

    synth = sub.add_parser("synth", help="generate synthetic oracle data")
    synth_sub = synth.add_subparsers(dest="kind", required=True)

    mixture = synth_sub.add_parser("mixture", help="pseudo-image KEMB store + manifest")
    mixture.add_argument("--k-true", type=int, required=True)
    mixture.add_argument("--points-per-component", default="30",
                         help="int, or comma list with one count per component")
    mixture.add_argument("--dim", type=int, default=64)
    mixture.add_argument("--center-scale", type=float, default=40.0)
    mixture.add_argument("--within-std", type=float, default=1.0)
    mixture.add_argument("--images", type=int, default=1,
                         help="split the points into this many pseudo-images")
    mixture.add_argument("--seed", type=int, default=0)
    mixture.add_argument("--out", required=True)
    mixture.set_defaults(func=cmd_synth)

    choice = synth_sub.add_parser("choice", help="choice rows in the exp1.csv schema")
    choice.add_argument("--beta", default="-0.5,1.0",
                        help="comma list: intercept, k-term, then covariates")
    choice.add_argument("--n", type=int, default=5000)
    choice.add_argument("--spec", choices=["diff", "ratio"], default="ratio")
    choice.add_argument("--seed", type=int, default=0)
    choice.add_argument("--out", required=True)
    choice.set_defaults(func=cmd_synth)

    panel = synth_sub.add_parser("panel", help="panel rows in the exp2.csv schema")
    panel.add_argument("--beta", default="-0.18,-0.08,0.03",
                       help="slopes for k/1000, price/1000, n_images")
    panel.add_argument("--users", type=int, default=996)
    panel.add_argument("--products-per-user", type=int, default=10)
    panel.add_argument("--fe-std", type=float, default=0.05)
    panel.add_argument("--noise-std", type=float, default=0.0)
    panel.add_argument("--outcome", choices=["linear", "binary"], default="binary")
    panel.add_argument("--seed", type=int, default=0)
    panel.add_argument("--out", required=True)
    panel.set_defaults(func=cmd_synth)

    validate = sub.add_parser("validate", help="run the synthetic validation suite")
    validate.add_argument("--quick", action="store_true",
                          help="reduced replication counts, same checks")
    validate.set_defaults(func=cmd_validate)

    trace = sub.add_parser("trace", help="pretty-print a search trace CSV")
    trace.add_argument("path")
    trace.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ImgkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
