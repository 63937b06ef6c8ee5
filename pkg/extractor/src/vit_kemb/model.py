"""ViT model construction, patch-token forward pass, and self-checks.

The reference backbone is ViT-L/16 at 224x224: 14x14 = 196 spatial patch
tokens of width 1024. Patch embeddings are taken from the transformer
encoder output (after its final layer norm, before the classification
heads), with the class token dropped.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
from torchvision.models import VisionTransformer, vit_b_16, vit_l_16

REFERENCE_ARCH = "vit_l_16"
REFERENCE_HIDDEN = 1024
REFERENCE_GRID = 14
REFERENCE_TOKENS = REFERENCE_GRID * REFERENCE_GRID  # 196
MODEL_TAG_PRETRAINED = "vit-l16-in21k"
MODEL_TAG_RANDOM = "vit-l16-random"

_ARCHS = {"vit_l_16": vit_l_16, "vit_b_16": vit_b_16}


class SelfCheckError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


def build_model(arch: str = REFERENCE_ARCH, checkpoint: str | None = None,
                pretrained: bool = False,
                random_init_seed: int | None = None) -> tuple[VisionTransformer, str]:
    """Build the backbone and report the model tag for KEMB metadata.

    Weight sources, in priority order: an explicit local ``checkpoint``
    (a torchvision-layout state dict; any shape mismatch is a hard error
    before anything is written), ``pretrained`` torchvision weights (needs
    network access), or a seeded random init intended for offline tests.
    """
    if arch not in _ARCHS:
        raise ValueError(f"unknown arch {arch!r}; choose from {sorted(_ARCHS)}")
    if random_init_seed is not None:
        torch.manual_seed(random_init_seed)
    model = _ARCHS[arch](weights="IMAGENET1K_V1" if pretrained and checkpoint is None else None)
    tag = MODEL_TAG_PRETRAINED if pretrained else MODEL_TAG_RANDOM
    if checkpoint is not None:
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "model" in state and hasattr(state["model"], "keys"):
            state = state["model"]
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CheckpointError(f"checkpoint does not match {arch}: {exc}") from exc
        tag = MODEL_TAG_PRETRAINED
    model.eval()
    return model, tag


def patch_tokens(model: VisionTransformer, batch: torch.Tensor) -> torch.Tensor:
    """Encoder output for each spatial patch, class token excluded.

    Returns (B, 196, hidden) float32. The class token sits at index 0 of the
    encoder sequence; the 196 = 14 x 14 spatial tokens follow in row-major
    patch order.
    """
    captured: dict[str, torch.Tensor] = {}
    handle = model.encoder.register_forward_hook(
        lambda module, inputs, output: captured.__setitem__("tokens", output)
    )
    try:
        with torch.no_grad():
            model(batch)
    finally:
        handle.remove()
    return captured["tokens"][:, 1:, :].to(torch.float32)


def weights_fingerprint(model: torch.nn.Module) -> str:
    """Order-stable hash over all parameter bytes; distinguishes checkpoints."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:16]


@dataclass(frozen=True)
class SelfCheckReport:
    hidden_dim: int
    grid: int
    n_tokens: int
    dtype: str
    fingerprint: str

    def __str__(self) -> str:
        return (f"{self.hidden_dim}-d, {self.n_tokens} spatial tokens "
                f"({self.grid}x{self.grid}), dtype {self.dtype}, "
                f"weights {self.fingerprint}, OK")


def selfcheck(model: VisionTransformer) -> SelfCheckReport:
    """Verify the backbone matches the KEMB reference contract."""
    if model.hidden_dim != REFERENCE_HIDDEN:
        raise SelfCheckError(
            f"hidden-size mismatch: model is {model.hidden_dim}-d, "
            f"reference needs {REFERENCE_HIDDEN}-d"
        )
    if model.patch_size != 16 or model.image_size != 224:
        raise SelfCheckError(
            f"patch grid mismatch: patch_size={model.patch_size}, "
            f"image_size={model.image_size}, reference needs 16 @ 224"
        )
    tokens = patch_tokens(model, torch.zeros(1, 3, 224, 224))
    if tokens.shape != (1, REFERENCE_TOKENS, REFERENCE_HIDDEN):
        raise SelfCheckError(f"unexpected token shape {tuple(tokens.shape)}")
    if tokens.dtype != torch.float32:
        raise SelfCheckError(f"unexpected dtype {tokens.dtype}")
    return SelfCheckReport(
        hidden_dim=model.hidden_dim,
        grid=model.image_size // model.patch_size,
        n_tokens=REFERENCE_TOKENS,
        dtype="float32",
        fingerprint=weights_fingerprint(model),
    )
