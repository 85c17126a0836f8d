"""Fusing deep and textural descriptors into fixed-layout feature vectors.

Per pyramid level the vector carries 1000 extractor-A floats, 1000
extractor-B floats, then for each channel R, G, B a 256-bin LPQ histogram
followed by a 59-bin LBP histogram: 2945 columns per level, 11780 over the
four levels (raw, LL1, LL2, LL3). Column attribution is bijective: every
index maps to exactly one (source, level, channel, local index).

Level 0 textures come from the raw 8-bit intensities; deeper levels
quantize each real LL plane to 8 bits (per-plane min-max) first.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import deepfeat, dwt, lbp, lpq
from .deepfeat import DeepFeatureStore
from .errors import StoreFormatError, ValidationError
from .imagecore import CHANNELS, DatasetManifest, Image, load_image

N_LEVELS = 4
TEXTURAL_PER_CHANNEL = lpq.N_BINS + lbp.N_BINS          # 315
TEXTURAL_PER_LEVEL = 3 * TEXTURAL_PER_CHANNEL           # 945
LEVEL_LEN = deepfeat.VECTOR_LEN + TEXTURAL_PER_LEVEL    # 2945
TOTAL_COLUMNS = N_LEVELS * LEVEL_LEN                    # 11780

MATRIX_MAGIC = b"PHFM"
MATRIX_VERSION = 1


@dataclass(frozen=True)
class ColumnInfo:
    """Provenance of one fused column."""

    source: str          # "deepA" | "deepB" | "lpq" | "lbp"
    level: int           # 0..3
    channel: str | None  # "R"/"G"/"B" for textural sources, None for deep
    local_index: int     # index within the source block


class FeatureLayout:
    """The fixed 11780-column layout and its column attribution table."""

    def __init__(self) -> None:
        columns: list[ColumnInfo] = []
        for level in range(N_LEVELS):
            columns.extend(
                ColumnInfo("deepA", level, None, i)
                for i in range(deepfeat.HALF_LEN)
            )
            columns.extend(
                ColumnInfo("deepB", level, None, i)
                for i in range(deepfeat.HALF_LEN)
            )
            for channel in CHANNELS:
                columns.extend(
                    ColumnInfo("lpq", level, channel, i) for i in range(lpq.N_BINS)
                )
                columns.extend(
                    ColumnInfo("lbp", level, channel, i) for i in range(lbp.N_BINS)
                )
        self._columns = tuple(columns)
        assert len(self._columns) == TOTAL_COLUMNS

    def __len__(self) -> int:
        return TOTAL_COLUMNS

    def column(self, index: int) -> ColumnInfo:
        return self._columns[index]

    @property
    def columns(self) -> tuple[ColumnInfo, ...]:
        return self._columns

    def deep_indices(self) -> np.ndarray:
        """All columns fed from the deep store (8000 of 11780)."""
        return np.array(
            [i for i, c in enumerate(self._columns) if c.source in ("deepA", "deepB")],
            dtype=np.int64,
        )

    def level_slice(self, level: int) -> slice:
        if not 0 <= level < N_LEVELS:
            raise ValidationError(f"level must be 0..{N_LEVELS - 1}, got {level}")
        return slice(level * LEVEL_LEN, (level + 1) * LEVEL_LEN)

    def schema(self) -> dict:
        """Compact structural description (enough to rebuild the table)."""
        return {
            "levels": N_LEVELS,
            "per_level": [
                ["deepA", deepfeat.HALF_LEN],
                ["deepB", deepfeat.HALF_LEN],
            ]
            + [[f"{src}:{ch}", n]
               for ch in CHANNELS
               for src, n in (("lpq", lpq.N_BINS), ("lbp", lbp.N_BINS))],
            "total": TOTAL_COLUMNS,
        }

    def layout_hash(self) -> str:
        blob = json.dumps(self.schema(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FuseConfig:
    """Knobs that change fused values (and therefore the cache key)."""

    lpq: lpq.LpqConfig = field(default_factory=lpq.LpqConfig)
    pyramid_levels: int = dwt.PYRAMID_LEVELS

    def tag(self) -> str:
        return json.dumps(
            {
                "lpq_window": self.lpq.window,
                "lpq_alpha": self.lpq.alpha,
                "pyramid_levels": self.pyramid_levels,
            },
            sort_keys=True,
        )


@dataclass
class FeatureMatrix:
    """Row-per-image fused features with labels, ids and layout identity."""

    values: np.ndarray            # (n, 11780) float32
    labels: np.ndarray            # (n,) int64
    ids: tuple[str, ...]
    layout_hash: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != TOTAL_COLUMNS:
            raise ValidationError(
                f"feature matrix must be (n, {TOTAL_COLUMNS}), got {self.values.shape}"
            )
        if len(self.labels) != self.values.shape[0] or len(self.ids) != self.values.shape[0]:
            raise ValidationError("rows, labels and ids must align")


def textural_features(
    level_planes: np.ndarray, config: lpq.LpqConfig | None = None
) -> np.ndarray:
    """945 textural floats for one (H, W, 3) plane stack: per channel R, G, B
    the 256-bin LPQ histogram then the 59-bin LBP histogram."""
    config = config or lpq.LpqConfig()
    if level_planes.ndim != 3 or level_planes.shape[2] != 3:
        raise ValidationError("expected an (H, W, 3) plane stack")
    parts = []
    for c in range(3):
        plane = np.asarray(level_planes[:, :, c], dtype=np.float64)
        parts.append(lpq.lpq_histogram(plane, config))
        parts.append(lbp.lbp_histogram(plane))
    out = np.concatenate(parts).astype(np.float32)
    assert out.shape == (TEXTURAL_PER_LEVEL,)
    return out


def fuse_image(
    image: Image,
    store: DeepFeatureStore,
    config: FuseConfig | None = None,
) -> np.ndarray:
    """One 11780-float row: per level the stored deep vector then the
    textural block computed from the level's (quantized) planes."""
    config = config or FuseConfig()
    pyramid = dwt.build_pyramid(image, config.pyramid_levels)
    parts: list[np.ndarray] = []
    for level, planes in enumerate(pyramid.levels):
        deep = deepfeat.lookup(store, image.id, level)
        if level > 0:
            planes = np.stack(
                [dwt.quantize_plane(planes[:, :, c]).astype(np.float64) for c in range(3)],
                axis=2,
            )
        parts.append(deep.astype(np.float32))
        parts.append(textural_features(planes, config.lpq))
    row = np.concatenate(parts)
    assert row.shape == (TOTAL_COLUMNS,)
    return row


def _cache_key(image_bytes: bytes, config: FuseConfig, store_tag: str) -> str:
    digest = hashlib.sha256()
    digest.update(image_bytes)
    digest.update(config.tag().encode())
    digest.update(store_tag.encode())
    return digest.hexdigest()


def store_fingerprint(store: DeepFeatureStore, source_path: str | Path | None = None) -> str:
    """Cache-key component identifying the deep vectors in use."""
    if store.metadata.get("stub"):
        return "zero-stub"
    if source_path is not None:
        return hashlib.sha256(Path(source_path).read_bytes()).hexdigest()
    digest = hashlib.sha256()
    for (image_id, level), vector in sorted(store.records.items()):
        digest.update(image_id.encode())
        digest.update(bytes([level]))
        digest.update(vector.tobytes())
    return digest.hexdigest()


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def fuse_dataset(
    manifest: DatasetManifest,
    root: str | Path,
    store: DeepFeatureStore,
    config: FuseConfig | None = None,
    jobs: int = 1,
    cache_dir: str | Path | None = None,
    store_tag: str | None = None,
) -> FeatureMatrix:
    """Fuse every manifest image (row order = manifest order).

    Rows are independent, so ``jobs`` > 1 fans them out to a thread pool;
    results are assembled by index, keeping the output identical for any
    thread count. With ``cache_dir`` set, per-image rows are reused when
    the image bytes, the fuse config and the deep store are unchanged.
    """
    config = config or FuseConfig()
    root = Path(root)
    deepfeat.validate_complete(store, manifest)
    tag = store_tag if store_tag is not None else store_fingerprint(store)
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)

    def one_row(entry: tuple[str, int]) -> np.ndarray:
        image_id, _ = entry
        path = root / image_id
        raw = path.read_bytes()
        key = _cache_key(raw, config, tag)
        if cache is not None:
            hit = cache / f"{key}.npy"
            if hit.exists():
                row = np.load(hit)
                if row.shape == (TOTAL_COLUMNS,) and row.dtype == np.float32:
                    return row
        image = load_image(path, image_id=image_id)
        row = fuse_image(image, store, config)
        if cache is not None:
            tmp = cache / f"{key}.npy.tmp"
            with open(tmp, "wb") as fh:
                np.save(fh, row)
            os.replace(tmp, cache / f"{key}.npy")
        return row

    if jobs <= 1:
        rows = [one_row(entry) for entry in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one_row, manifest.entries))

    layout = FeatureLayout()
    return FeatureMatrix(
        values=np.vstack(rows),
        labels=manifest.labels,
        ids=manifest.ids,
        layout_hash=layout.layout_hash(),
        provenance={"fuse": json.loads(config.tag()), "deep_store": tag},
    )


def save_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    """Serialize a feature matrix: PHFM magic, version, JSON header
    (shape, ids, labels, layout, provenance), then row-major f32 data."""
    header = {
        "rows": int(matrix.values.shape[0]),
        "cols": int(matrix.values.shape[1]),
        "ids": list(matrix.ids),
        "labels": [int(v) for v in matrix.labels],
        "layout_hash": matrix.layout_hash,
        "layout_schema": FeatureLayout().schema(),
        "provenance": matrix.provenance,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = (
        MATRIX_MAGIC
        + struct.pack("<HI", MATRIX_VERSION, len(header_bytes))
        + header_bytes
        + matrix.values.astype("<f4").tobytes()
    )
    _atomic_write_bytes(Path(path), payload)


def load_matrix(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MATRIX_MAGIC:
        raise StoreFormatError(f"{path}: missing PHFM magic")
    version, header_len = struct.unpack_from("<HI", data, 4)
    if version != MATRIX_VERSION:
        raise StoreFormatError(f"{path}: unsupported matrix version {version}")
    pos = 4 + 6
    try:
        header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"{path}: bad matrix header: {exc}") from exc
    pos += header_len
    rows, cols = header["rows"], header["cols"]
    expected = rows * cols * 4
    if len(data) - pos != expected:
        raise StoreFormatError(
            f"{path}: expected {expected} data bytes, found {len(data) - pos}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=pos).reshape(rows, cols).copy()
    return FeatureMatrix(
        values=values,
        labels=np.array(header["labels"], dtype=np.int64),
        ids=tuple(header["ids"]),
        layout_hash=header["layout_hash"],
        provenance=header.get("provenance", {}),
    )


def export_matrix_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    """Plain-text mirror of the matrix: id,label,c0,...,c11779."""
    with open(Path(path), "w") as fh:
        fh.write("id,label," + ",".join(f"c{i}" for i in range(TOTAL_COLUMNS)) + "\n")
        for image_id, label, row in zip(matrix.ids, matrix.labels, matrix.values):
            fh.write(f"{image_id},{int(label)},")
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
