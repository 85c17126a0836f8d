"""Cross-implementation pyramid check.

The consumer pipeline dumps its LL planes as float64 ``.npy`` files plus a
``pyramid_index.json`` (entries: id, image path, level, channel, file).
This module rebuilds the same pyramid from the original images and compares
each plane on the quantization scale: both sides are min-max rescaled to
[0, 255] as floats and must agree within a max-abs tolerance. Rescaling
puts every level on one scale (raw LL magnitudes double per level), while
staying exactly as strict as comparing quantized planes everywhere away
from rounding boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pyramid
from .errors import ExporterConfigError, ParityError

TOLERANCE = 1e-5
_CHANNEL_INDEX = {"R": 0, "G": 1, "B": 2}


@dataclass
class ParityReport:
    planes: int
    worst: float
    per_level: dict[int, float]

    def __str__(self) -> str:
        levels = ", ".join(
            f"L{level}={err:.3g}" for level, err in sorted(self.per_level.items())
        )
        return f"{self.planes} planes, worst {self.worst:.3g} ({levels})"


def verify_pyramid_parity(
    fixture_dir: str | Path,
    tolerance: float = TOLERANCE,
    mode: str = "periodic",
) -> ParityReport:
    """Compare this package's pyramid against dumped reference planes.

    Raises ParityError with per-level worst errors when any plane differs
    by more than ``tolerance`` on the rescaled [0, 255] scale.
    """
    fixture_dir = Path(fixture_dir)
    index_path = fixture_dir / "pyramid_index.json"
    if not index_path.is_file():
        raise ExporterConfigError(
            f"{fixture_dir} has no pyramid_index.json (empty or wrong fixture dir)"
        )
    entries = json.loads(index_path.read_text())
    if not entries:
        raise ExporterConfigError(f"{index_path} lists no planes")

    pyramids: dict[str, list[np.ndarray]] = {}
    per_level: dict[int, float] = {}
    planes = 0
    for entry in entries:
        image_path = entry["image"]
        if image_path not in pyramids:
            from .export import load_rgb

            pyramids[image_path] = pyramid.build_pyramid(
                load_rgb(Path(image_path)), mode=mode
            )
        level = int(entry["level"])
        channel = _CHANNEL_INDEX[entry["channel"]]
        ours = pyramids[image_path][level][:, :, channel]
        reference = np.load(fixture_dir / entry["file"])
        if reference.shape != ours.shape:
            raise ParityError(
                f"{entry['file']}: shape {ours.shape} vs reference {reference.shape}"
            )
        gap = float(
            np.abs(
                pyramid.rescale_unit_range(ours)
                - pyramid.rescale_unit_range(reference)
            ).max()
        )
        per_level[level] = max(per_level.get(level, 0.0), gap)
        planes += 1

    worst = max(per_level.values())
    report = ParityReport(planes=planes, worst=worst, per_level=per_level)
    if worst > tolerance:
        raise ParityError(f"pyramid mismatch beyond {tolerance:g}: {report}")
    return report
