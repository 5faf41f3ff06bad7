"""Model loading and the tile -> logits forward pass.

Three loaders:

  identity            fixed logits (plane k = 1 - 0.1k), no torch import;
                      the conformance baseline
  torchvision:NAME    a torchvision segmentation architecture built with
                      num_classes output channels (random init unless
                      --weights points at a state dict)
  torchscript:PATH    a scripted/traced model taking (1,3,H,W) float input

Model outputs are remapped to the six canonical semantic classes
(0 background, 1 boundary, 2 built, 3 non-built, 4 water, 5 road
network) through the configured class map: canonical plane k comes from
model channel class_map[k].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CANONICAL_CLASSES = 6

# ImageNet statistics; sensible default for checkpoints trained on them
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class ModelError(RuntimeError):
    pass


@dataclass
class AdapterConfig:
    model: str = "identity"
    weights: str | None = None
    device: str = "cpu"
    patch: int | None = 768  # None accepts any tile size
    class_map: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    model_classes: int = 6
    normalize: bool = True
    concurrent_safe: bool = False

    def __post_init__(self):
        self.class_map = tuple(int(c) for c in self.class_map)
        if len(self.class_map) != CANONICAL_CLASSES:
            raise ModelError(f"class map needs {CANONICAL_CLASSES} entries, got {len(self.class_map)}")
        if any(c < 0 for c in self.class_map):
            raise ModelError("class map entries must be non-negative channel indices")
        if self.patch is not None and self.patch != 768:
            raise ModelError("patch size must be 768 (use --patch any to lift the check)")


class IdentityModel:
    """Fixed logits, bit-exact across runs; used for protocol conformance."""

    def __init__(self, channels: int = CANONICAL_CLASSES):
        self.channels = channels

    def __call__(self, tile: np.ndarray) -> np.ndarray:
        h, w = tile.shape[:2]
        return np.stack([
            np.full((h, w), 1.0 - 0.1 * k, dtype=np.float32) for k in range(self.channels)
        ])


class TorchModel:
    """Wraps a torch module; lazily imported so identity mode stays light."""

    def __init__(self, config: AdapterConfig):
        import torch

        self._torch = torch
        self.device = torch.device(config.device)
        self.normalize = config.normalize
        name = config.model.split(":", 1)[1] if ":" in config.model else config.model
        if config.model.startswith("torchscript:"):
            self.module = torch.jit.load(name, map_location=self.device)
        else:
            self.module = self._build_torchvision(name, config.model_classes)
            if config.weights:
                state = torch.load(config.weights, map_location=self.device, weights_only=True)
                if isinstance(state, dict) and "state_dict" in state:
                    state = state["state_dict"]
                self.module.load_state_dict(state)
        self.module.to(self.device)
        self.module.eval()

    def _build_torchvision(self, name: str, num_classes: int):
        from torchvision.models import segmentation as seg

        if not hasattr(seg, name):
            raise ModelError(f"torchvision.models.segmentation has no model {name!r}")
        builder = getattr(seg, name)
        return builder(weights=None, weights_backbone=None, num_classes=num_classes,
                       aux_loss=None)

    def __call__(self, tile: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = tile.astype(np.float32) / 255.0
        if self.normalize:
            x = (x - _MEAN) / _STD
        tensor = torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1))[None]).to(self.device)
        with torch.no_grad():
            out = self.module(tensor)
        if isinstance(out, dict):
            out = out.get("out", next(iter(out.values())))
        arr = out.squeeze(0).cpu().numpy().astype(np.float32)
        if arr.ndim != 3:
            raise ModelError(f"model returned rank-{arr.ndim} output, expected (C, H, W)")
        return arr


def load_model(config: AdapterConfig):
    if config.model == "identity":
        return IdentityModel()
    return TorchModel(config)


@dataclass
class TilePredictor:
    """Runs the model on a tile and emits exactly six canonical planes."""

    config: AdapterConfig
    model: object = field(default=None)

    def __post_init__(self):
        if self.model is None:
            self.model = load_model(self.config)

    def predict(self, tile: np.ndarray) -> np.ndarray:
        h, w = tile.shape[:2]
        patch = self.config.patch
        if patch is not None and (h != patch or w != patch):
            raise ModelError(f"tile is {w}x{h}, adapter is configured for {patch}x{patch}")
        raw = self.model(tile)
        c = raw.shape[0]
        if max(self.config.class_map) >= c:
            raise ModelError(
                f"class map references channel {max(self.config.class_map)} "
                f"but the model emits only {c} channels"
            )
        logits = raw[list(self.config.class_map)]
        if not np.isfinite(logits).all():
            raise ModelError("model produced non-finite logits")
        return np.ascontiguousarray(logits, dtype=np.float32)
