"""Frozen ResNet-50 inference and the extraction driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .codec import FeatureRecord, read_manifest, write_features

FEATURE_DIM = 2048
# canonical backbone input normalization
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
INPUT_SIZE = 224


@dataclass
class ExtractorConfig:
    manifest: str
    out: str
    batch_size: int = 16
    device: str = "cpu"
    weights: str = None  # local backbone weight file; random frozen init if absent
    seed: int = 0        # init seed for the weightless fallback
    mean: tuple = field(default=IMAGENET_MEAN)
    std: tuple = field(default=IMAGENET_STD)

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean/std must have 3 channel entries")


def load_backbone(config: ExtractorConfig) -> torch.nn.Module:
    """Frozen ResNet-50 up to global average pooling (2048-dim output).

    With ``config.weights`` the state dict is loaded from that file;
    otherwise the backbone keeps a deterministic random initialization
    (seeded), which still satisfies every structural contract of the
    feature file and keeps the tool usable offline.
    """
    from torchvision.models import resnet50

    torch.manual_seed(config.seed)
    model = resnet50(weights=None)
    if config.weights:
        state = torch.load(config.weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.fc = torch.nn.Identity()  # stop at the 2048-dim pooled features
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model.to(config.device)


def prepare_image(path, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> torch.Tensor:
    """Grayscale -> replicated 3 channels, canonical resize + normalize."""
    with Image.open(path) as img:
        gray = img.convert("L").resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    arr = np.asarray(gray, dtype=np.float32) / 255.0
    chans = np.stack([(arr - m) / s for m, s in zip(mean, std)])
    return torch.from_numpy(chans)


def extract(config: ExtractorConfig):
    """Run the manifest through the backbone and write the feature file.

    Returns (n_written, failures) where failures is a list of
    (id, path, error) tuples for unreadable images.
    """
    manifest = read_manifest(config.manifest)
    model = load_backbone(config)

    batch_imgs, batch_meta = [], []
    records, failures = [], []

    def flush():
        if not batch_imgs:
            return
        x = torch.stack(batch_imgs).to(config.device)
        with torch.inference_mode():
            feats = model(x).cpu().numpy().astype(np.float32)
        assert feats.shape[1] == FEATURE_DIM
        for (sid, code), vec in zip(batch_meta, feats):
            records.append(FeatureRecord(sid, code, vec))
        batch_imgs.clear()
        batch_meta.clear()

    for rec in manifest:
        try:
            tensor = prepare_image(rec.path, config.mean, config.std)
        except (OSError, ValueError) as exc:
            failures.append((rec.sample_id, rec.path, str(exc)))
            continue
        batch_imgs.append(tensor)
        batch_meta.append((rec.sample_id, rec.label_code))
        if len(batch_imgs) >= config.batch_size:
            flush()
    flush()

    write_features(config.out, records, dim=FEATURE_DIM)
    if failures:
        sidecar = Path(str(config.out) + ".failures.csv")
        sidecar.write_text(
            "id,path,error\n"
            + "\n".join(f"{i},{p},{e!r}" for i, p, e in failures) + "\n"
        )
    return len(records), failures
