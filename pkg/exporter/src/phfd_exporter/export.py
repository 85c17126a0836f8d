"""Dataset walk -> pyramid -> two networks -> PHFD records.

Level intensities: level 0 feeds the networks as-is; the LL plane at level
k is divided by 2**k before preprocessing, undoing the scaling filter's DC
gain so every level presents the same photometric range (a solid-color
image therefore produces the same vector at every level, which doubles as
a self-check). The policy string is recorded in the store metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from . import phfd, pyramid
from .errors import ExporterConfigError
from .models import Extractor

_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}
_BATCH_PLANES = 32
INPUT_POLICY = "ll/2^level,clip-0-255,bilinear-224,imagenet-norm"


@dataclass
class ExporterConfig:
    root: str
    out: str
    layout: str = "class-subdirs"
    model_a: str = "resnet18"
    model_b: str = "resnet34"
    weights: str = "pretrained"
    seed: int = 0
    device: str = "cpu"
    boundary: str = "periodic"
    csv: bool = False
    levels: int = field(default=pyramid.N_LEVELS)


def scan_images(root: str | Path, layout: str = "class-subdirs") -> list[str]:
    """Sorted image ids (POSIX paths relative to the root)."""
    root = Path(root)
    if not root.is_dir():
        raise ExporterConfigError(f"dataset root {root} is not a directory")
    if layout == "class-subdirs":
        classes = sorted(p for p in root.iterdir() if p.is_dir())
        if len(classes) != 2:
            raise ExporterConfigError(
                f"expected exactly 2 class directories under {root}, "
                f"found {len(classes)}"
            )
        ids = [
            f"{cls.name}/{img.name}"
            for cls in classes
            for img in cls.iterdir()
            if img.suffix.lower() in _IMAGE_SUFFIXES
        ]
    elif layout == "csv-manifest":
        manifest = root / "manifest.csv"
        if not manifest.is_file():
            raise ExporterConfigError(f"{manifest} not found")
        lines = manifest.read_text().splitlines()
        if not lines or not lines[0].startswith("id,label"):
            raise ExporterConfigError(f"{manifest} must start with an id,label header")
        ids = [line.split(",", 1)[0] for line in lines[1:] if line.strip()]
    else:
        raise ExporterConfigError(f"unknown layout {layout!r}")
    if not ids:
        raise ExporterConfigError(f"no images found under {root}")
    return sorted(ids)


def load_rgb(path: Path) -> np.ndarray:
    with PilImage.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def level_plane(pyr: list[np.ndarray], level: int) -> np.ndarray:
    """The network-facing [0, 255] float RGB plane for one level."""
    plane = pyr[level] / float(2**level)
    return np.clip(plane, 0.0, 255.0)


def export(config: ExporterConfig) -> dict:
    """Run both extractors over every image's pyramid; returns a summary."""
    ids = scan_images(config.root, config.layout)
    extractor_a = Extractor(config.model_a, config.weights, config.seed, config.device)
    extractor_b = Extractor(
        config.model_b, config.weights, config.seed + 1, config.device
    )

    n_levels = config.levels + 1
    keys: list[tuple[str, int]] = []
    planes: list[np.ndarray] = []
    root = Path(config.root)
    for image_id in ids:
        pyr = pyramid.build_pyramid(
            load_rgb(root / image_id), config.levels, config.boundary
        )
        for level in range(n_levels):
            keys.append((image_id, level))
            planes.append(level_plane(pyr, level))

    records: dict[tuple[str, int], np.ndarray] = {}
    for start in range(0, len(planes), _BATCH_PLANES):
        chunk = planes[start : start + _BATCH_PLANES]
        feats_a = extractor_a.batch_features(chunk)
        feats_b = extractor_b.batch_features(chunk)
        for offset, key in enumerate(keys[start : start + _BATCH_PLANES]):
            records[key] = np.concatenate([feats_a[offset], feats_b[offset]])

    metadata = {
        "extractor_a": extractor_a.describe(),
        "extractor_b": extractor_b.describe(),
        "weights": config.weights,
        "seed": config.seed,
        "input_policy": INPUT_POLICY,
        "boundary": config.boundary,
    }
    phfd.write(records, metadata, config.out, fmt="csv" if config.csv else "phfd")
    return {
        "images": len(ids),
        "records": len(records),
        "out": str(config.out),
        "metadata": metadata,
    }
