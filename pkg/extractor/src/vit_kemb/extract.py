"""Image -> KEMB extraction jobs.

Preprocessing follows the published convention of the ImageNet-21k ViT
checkpoints: convert to RGB, resize straight to 224x224 (bicubic), scale to
[0, 1], normalize with mean = std = 0.5 per channel. Undecodable inputs are
skipped and reported; each KEMB is written atomically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch
from PIL import Image, UnidentifiedImageError
from torchvision.models import VisionTransformer
from torchvision.transforms import functional as tvf

from .kemb import write_kemb
from .model import build_model, patch_tokens

IMAGE_SIDE = 224
NORM_MEAN = [0.5, 0.5, 0.5]
NORM_STD = [0.5, 0.5, 0.5]


@dataclass(frozen=True)
class ExtractionJob:
    image_paths: tuple[Path, ...]
    out_dir: Path
    checkpoint: str | None = None
    pretrained: bool = False
    random_init_seed: int | None = None
    batch_size: int = 4
    device: str = "cpu"


@dataclass
class ExtractionResult:
    written: list[Path] = field(default_factory=list)
    skipped: list[tuple[Path, str]] = field(default_factory=list)


def preprocess(image: Image.Image) -> torch.Tensor:
    rgb = image.convert("RGB")
    resized = tvf.resize(rgb, [IMAGE_SIDE, IMAGE_SIDE],
                         interpolation=tvf.InterpolationMode.BICUBIC)
    tensor = tvf.to_tensor(resized)
    return tvf.normalize(tensor, NORM_MEAN, NORM_STD)


def load_image(path: Path) -> torch.Tensor | None:
    try:
        with Image.open(path) as img:
            return preprocess(img)
    except (UnidentifiedImageError, OSError):
        return None


def extract(job: ExtractionJob,
            model: VisionTransformer | None = None,
            model_tag: str | None = None) -> ExtractionResult:
    """Run the job; one KEMB per decodable input, named ``<stem>.kemb``."""
    if model is None:
        model, model_tag = build_model(
            checkpoint=job.checkpoint,
            pretrained=job.pretrained,
            random_init_seed=job.random_init_seed,
        )
    assert model_tag is not None, "model_tag must accompany an externally built model"
    device = torch.device(job.device)
    model = model.to(device)

    job.out_dir.mkdir(parents=True, exist_ok=True)
    result = ExtractionResult()
    pending: list[tuple[Path, torch.Tensor]] = []

    def flush() -> None:
        if not pending:
            return
        batch = torch.stack([tensor for _, tensor in pending]).to(device)
        tokens = patch_tokens(model, batch).cpu().numpy().astype("float32")
        for (path, _), patches in zip(pending, tokens):
            out_path = job.out_dir / f"{path.stem}.kemb"
            write_kemb(out_path, image_id=path.stem, patches=patches, model_tag=model_tag)
            result.written.append(out_path)
        pending.clear()

    for path in job.image_paths:
        tensor = load_image(path)
        if tensor is None:
            result.skipped.append((path, "undecodable image"))
            continue
        pending.append((path, tensor))
        if len(pending) >= job.batch_size:
            flush()
    flush()
    return result


def write_manifest(out_dir: Path, set_id: str, written: list[Path], notes: str = "") -> Path:
    import json

    manifest = {
        "set_id": set_id,
        "image_ids": [p.stem for p in written],
        "notes": notes,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
