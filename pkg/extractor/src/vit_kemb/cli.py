"""``vit-kemb`` command line: extract images to KEMB files, or self-check a model."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractionJob, extract, write_manifest
from .model import CheckpointError, SelfCheckError, build_model, selfcheck

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".webp", ".gif", ".tif", ".tiff"}


def cmd_extract(args) -> int:
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        print(f"error: images directory not found: {images_dir}", file=sys.stderr)
        return 2
    paths = tuple(
        p for p in sorted(images_dir.iterdir())
        if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        print(f"error: no images under {images_dir}", file=sys.stderr)
        return 2
    job = ExtractionJob(
        image_paths=paths,
        out_dir=Path(args.out),
        checkpoint=args.checkpoint,
        pretrained=args.pretrained,
        random_init_seed=args.random_init,
        batch_size=args.batch,
    )
    try:
        result = extract(job)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path, reason in result.skipped:
        print(f"skipped {path.name}: {reason}", file=sys.stderr)
    write_manifest(job.out_dir, set_id=images_dir.name, written=result.written)
    print(f"wrote {len(result.written)} KEMB file(s) to {job.out_dir} "
          f"({len(result.skipped)} skipped)")
    return 0 if result.written else 1


def cmd_selfcheck(args) -> int:
    try:
        model, _ = build_model(arch=args.arch, checkpoint=args.checkpoint,
                               pretrained=args.pretrained,
                               random_init_seed=args.random_init)
        report = selfcheck(model)
    except (SelfCheckError, CheckpointError) as exc:
        print(f"selfcheck FAILED: {exc}", file=sys.stderr)
        return 1
    print(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vit-kemb",
        description="ViT-L/16 patch-embedding extraction into KEMB files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="extract a directory of images")
    ex.add_argument("--images", required=True, help="directory of input images")
    ex.add_argument("--out", required=True, help="output directory for .kemb files")
    ex.add_argument("--batch", type=int, default=4)
    ex.add_argument("--checkpoint", default=None,
                    help="local state-dict checkpoint for the backbone")
    ex.add_argument("--pretrained", action="store_true",
                    help="download torchvision weights (needs network)")
    ex.add_argument("--random-init", type=int, default=None, metavar="SEED",
                    help="seeded random weights; offline test/dev mode")
    ex.set_defaults(func=cmd_extract)

    sc = sub.add_parser("selfcheck", help="verify the backbone meets the KEMB contract")
    sc.add_argument("--arch", default="vit_l_16", choices=["vit_l_16", "vit_b_16"])
    sc.add_argument("--checkpoint", default=None)
    sc.add_argument("--pretrained", action="store_true")
    sc.add_argument("--random-init", type=int, default=0, metavar="SEED")
    sc.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
