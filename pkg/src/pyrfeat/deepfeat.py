"""Externally produced deep-feature vectors, keyed by (image id, level).

The pipeline never runs a network itself: a sidecar tool materializes one
2000-float vector per image per pyramid level (components 0..999 from
extractor A, 1000..1999 from extractor B) into a store file this module
reads, validates and serves.

Binary layout (PHFD, all integers little-endian):

    magic     4 bytes  b"PHFD"
    version   u16      currently 1
    meta_len  u32      length of the UTF-8 JSON metadata block
    metadata  bytes    JSON object; must carry extractor_a / extractor_b
    records   ...      until EOF, each:
        id_len   u16
        id       UTF-8 bytes
        level    u8    0..3
        vector   2000 x f32

An equivalent CSV form (header ``id,level,f0,...,f1999``) exists for
hand-made fixtures; read_store sniffs the magic to pick the parser.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingRecordError, StoreFormatError, ValidationError
from .imagecore import DatasetManifest

MAGIC = b"PHFD"
VERSION = 1
VECTOR_LEN = 2000
HALF_LEN = VECTOR_LEN // 2
N_LEVELS = 4


@dataclass
class DeepFeatureStore:
    """In-memory map (id, level) -> float32 vector plus source metadata."""

    records: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, image_id: str, level: int, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (VECTOR_LEN,):
            raise ValidationError(
                f"record ({image_id!r}, {level}): expected {VECTOR_LEN} floats, "
                f"got shape {vector.shape}"
            )
        if not np.all(np.isfinite(vector)):
            raise ValidationError(
                f"record ({image_id!r}, {level}) contains non-finite values"
            )
        if not 0 <= level < N_LEVELS:
            raise ValidationError(
                f"record ({image_id!r}, {level}): level must be in 0..{N_LEVELS - 1}"
            )
        key = (image_id, level)
        if key in self.records:
            raise ValidationError(f"duplicate record for {key}")
        self.records[key] = vector

    def __len__(self) -> int:
        return len(self.records)


def lookup(store: DeepFeatureStore, image_id: str, level: int) -> np.ndarray:
    """The 2000-vector for (image_id, level); missing keys are an error."""
    try:
        return store.records[(image_id, level)]
    except KeyError:
        raise MissingRecordError(
            f"deep store has no record for id {image_id!r} level {level}"
        ) from None


def validate_complete(store: DeepFeatureStore, manifest: DatasetManifest) -> None:
    """Fail fast when any (id, level) pair a fusion run needs is missing."""
    missing = [
        (image_id, level)
        for image_id in manifest.ids
        for level in range(N_LEVELS)
        if (image_id, level) not in store.records
    ]
    if missing:
        shown = ", ".join(f"{i}@L{lv}" for i, lv in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise MissingRecordError(f"deep store lacks {len(missing)} records: {shown}{more}")


def zero_stub_store(manifest: DatasetManifest) -> DeepFeatureStore:
    """All-zero vectors for every (id, level): lets the textural half of the
    pipeline run standalone, with the deep columns eliminated downstream."""
    store = DeepFeatureStore(
        metadata={"extractor_a": "zero-stub", "extractor_b": "zero-stub", "stub": True}
    )
    zeros = np.zeros(VECTOR_LEN, dtype=np.float32)
    for image_id in manifest.ids:
        for level in range(N_LEVELS):
            store.add(image_id, level, zeros.copy())
    return store


def write_store(store: DeepFeatureStore, path: str | Path, fmt: str = "phfd") -> None:
    """Serialize to PHFD binary (fmt="phfd") or the CSV fixture form."""
    path = Path(path)
    if fmt == "phfd":
        payload = _encode_binary(store)
        path.write_bytes(payload)
    elif fmt == "csv":
        path.write_text(_encode_csv(store))
    else:
        raise ValidationError(f"unknown store format {fmt!r}")


def read_store(path: str | Path) -> DeepFeatureStore:
    """Parse a store file, sniffing PHFD magic vs CSV header."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == MAGIC:
        return _decode_binary(data, path)
    head = data[:16].decode("utf-8", errors="replace")
    if head.startswith("id,level,"):
        return _decode_csv(data.decode("utf-8"), path)
    raise StoreFormatError(f"{path}: neither PHFD magic nor CSV header found")


def _sorted_items(store: DeepFeatureStore):
    return sorted(store.records.items(), key=lambda kv: kv[0])


def _encode_binary(store: DeepFeatureStore) -> bytes:
    meta = dict(store.metadata)
    meta.setdefault("extractor_a", "unknown")
    meta.setdefault("extractor_b", "unknown")
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    for (image_id, level), vector in _sorted_items(store):
        id_bytes = image_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValidationError(f"image id too long: {image_id[:40]!r}...")
        buf.write(struct.pack("<H", len(id_bytes)))
        buf.write(id_bytes)
        buf.write(struct.pack("<B", level))
        buf.write(vector.astype("<f4").tobytes())
    return buf.getvalue()


def _decode_binary(data: bytes, path: Path) -> DeepFeatureStore:
    header_len = 4 + 2 + 4
    if len(data) < header_len:
        raise StoreFormatError(f"{path}: truncated header")
    version, meta_len = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported PHFD version {version}")
    pos = header_len
    if pos + meta_len > len(data):
        raise StoreFormatError(f"{path}: truncated metadata block")
    try:
        metadata = json.loads(data[pos : pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"{path}: bad metadata block: {exc}") from exc
    pos += meta_len
    store = DeepFeatureStore(metadata=metadata)
    vec_bytes = VECTOR_LEN * 4
    while pos < len(data):
        if pos + 2 > len(data):
            raise StoreFormatError(f"{path}: truncated record at offset {pos}")
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + id_len + 1 + vec_bytes > len(data):
            raise StoreFormatError(f"{path}: truncated record at offset {pos}")
        image_id = data[pos : pos + id_len].decode("utf-8")
        pos += id_len
        level = data[pos]
        pos += 1
        vector = np.frombuffer(data, dtype="<f4", count=VECTOR_LEN, offset=pos).copy()
        pos += vec_bytes
        try:
            store.add(image_id, level, vector)
        except ValidationError as exc:
            raise StoreFormatError(f"{path}: {exc}") from exc
    return store


def _encode_csv(store: DeepFeatureStore) -> str:
    header = "id,level," + ",".join(f"f{i}" for i in range(VECTOR_LEN))
    lines = [header]
    for (image_id, level), vector in _sorted_items(store):
        if "," in image_id or "\n" in image_id:
            raise ValidationError(f"id {image_id!r} cannot be stored in CSV form")
        # repr of the exact float64 value of each float32 round-trips exactly
        values = ",".join(repr(float(v)) for v in vector)
        lines.append(f"{image_id},{level},{values}")
    return "\n".join(lines) + "\n"


def _decode_csv(text: str, path: Path) -> DeepFeatureStore:
    lines = text.splitlines()
    expected_header = "id,level," + ",".join(f"f{i}" for i in range(VECTOR_LEN))
    if not lines or lines[0] != expected_header:
        raise StoreFormatError(f"{path}: bad CSV header")
    store = DeepFeatureStore(
        metadata={"extractor_a": "csv", "extractor_b": "csv", "source": path.name}
    )
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2 + VECTOR_LEN:
            raise StoreFormatError(
                f"{path}:{lineno}: expected {2 + VECTOR_LEN} fields, got {len(parts)}"
            )
        try:
            level = int(parts[1])
            vector = np.array([np.float32(float(v)) for v in parts[2:]], dtype=np.float32)
        except ValueError as exc:
            raise StoreFormatError(f"{path}:{lineno}: {exc}") from exc
        try:
            store.add(parts[0], level, vector)
        except ValidationError as exc:
            raise StoreFormatError(f"{path}:{lineno}: {exc}") from exc
    return store
