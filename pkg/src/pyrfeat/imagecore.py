"""Image decoding, dataset manifests and channel plumbing.

Images enter the pipeline as 8-bit RGB arrays with stable string ids.
Datasets are either a root directory with one subdirectory per class
(alphabetical order fixes the label numbering: first directory -> 0)
or a CSV manifest with an ``id,label`` header.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .errors import ValidationError

CHANNELS = ("R", "G", "B")

MIN_DIM = 8  # analysis filters need at least one full period per axis


@dataclass(frozen=True)
class Image:
    """A decoded 8-bit RGB image plus its dataset identity."""

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValidationError(
                f"image {self.id!r}: expected (H, W, 3) uint8 pixels, "
                f"got shape {px.shape} dtype {px.dtype}"
            )
        if px.shape[0] < MIN_DIM or px.shape[1] < MIN_DIM:
            raise ValidationError(
                f"image {self.id!r}: {px.shape[0]}x{px.shape[1]} is below "
                f"the {MIN_DIM}-pixel minimum per axis"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ChannelPlane:
    """One color channel as a float64 plane."""

    values: np.ndarray  # (H, W) float64
    channel: str  # "R" | "G" | "B"

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        if self.values.ndim != 2:
            raise ValidationError("channel plane must be 2-D")


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered (id, label) listing with binary labels 0/1."""

    entries: tuple[tuple[str, int], ...]
    class_names: dict[int, str] = field(
        default_factory=lambda: {0: "benign", 1: "malign"}
    )

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for image_id, label in self.entries:
            if label not in (0, 1):
                raise ValidationError(
                    f"manifest entry {image_id!r} has label {label!r}, expected 0 or 1"
                )
            if image_id in seen:
                raise ValidationError(f"duplicate image id {image_id!r} in manifest")
            seen.add(image_id)
        labels = self.labels
        if len(labels) == 0 or labels.min() == labels.max():
            raise ValidationError("manifest must contain both classes")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(image_id for image_id, _ in self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.entries], dtype=np.int64)

    def class_counts(self) -> dict[int, int]:
        labels = self.labels
        return {0: int((labels == 0).sum()), 1: int((labels == 1).sum())}


def load_image(path: str | Path, image_id: str | None = None) -> Image:
    """Decode one image file to 8-bit RGB.

    Grayscale inputs are replicated across the three channels; palette and
    alpha variants are collapsed to RGB. Decode failures surface as OSError
    naming the path so the CLI can report an I/O failure.
    """
    path = Path(path)
    try:
        with PilImage.open(path) as img:
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except OSError as exc:
        raise OSError(f"cannot decode image {path}: {exc}") from exc
    if pixels.size == 0:
        raise ValidationError(f"image {path} is empty")
    return Image(id=image_id if image_id is not None else path.name, pixels=pixels)


def split_channels(image: Image) -> tuple[ChannelPlane, ChannelPlane, ChannelPlane]:
    """Split an RGB image into float64 R, G, B planes (values preserved exactly)."""
    planes = tuple(
        ChannelPlane(values=image.pixels[:, :, i].astype(np.float64), channel=name)
        for i, name in enumerate(CHANNELS)
    )
    return planes  # type: ignore[return-value]


_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}


def scan_dataset(root: str | Path, layout: str = "class-subdirs") -> DatasetManifest:
    """Build a manifest from a dataset on disk.

    layout="class-subdirs": ``root`` holds exactly two class directories;
    alphabetical order assigns labels (first -> 0, second -> 1). Ids are
    POSIX-style paths relative to root, sorted lexicographically.

    layout="csv-manifest": ``root`` is a CSV file (or a directory containing
    ``manifest.csv``) with an ``id,label`` header.
    """
    root = Path(root)
    if layout == "class-subdirs":
        return _scan_class_subdirs(root)
    if layout == "csv-manifest":
        return _scan_csv_manifest(root)
    raise ValidationError(f"unknown dataset layout {layout!r}")


def _scan_class_subdirs(root: Path) -> DatasetManifest:
    if not root.is_dir():
        raise OSError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) != 2:
        raise ValidationError(
            f"dataset root {root} must contain exactly 2 class directories, "
            f"found {len(class_dirs)}"
        )
    entries: list[tuple[str, int]] = []
    names: dict[int, str] = {}
    for label, class_dir in enumerate(class_dirs):
        names[label] = class_dir.name
        files = sorted(
            p for p in class_dir.rglob("*")
            if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not files:
            raise ValidationError(f"class directory {class_dir} contains no images")
        entries.extend((p.relative_to(root).as_posix(), label) for p in files)
    entries.sort(key=lambda e: e[0])
    return DatasetManifest(entries=tuple(entries), class_names=names)


def _scan_csv_manifest(root: Path) -> DatasetManifest:
    csv_path = root if root.is_file() else root / "manifest.csv"
    if not csv_path.is_file():
        raise OSError(f"manifest CSV {csv_path} not found")
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"manifest {csv_path} is empty") from None
        if [h.strip().lower() for h in header[:2]] != ["id", "label"]:
            raise ValidationError(
                f"manifest {csv_path} must start with an 'id,label' header"
            )
        entries = []
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise ValidationError(f"manifest row {row!r} lacks a label")
            try:
                label = int(row[1])
            except ValueError:
                raise ValidationError(
                    f"manifest label {row[1]!r} for id {row[0]!r} is not an integer"
                ) from None
            entries.append((row[0], label))
    return DatasetManifest(entries=tuple(entries))
