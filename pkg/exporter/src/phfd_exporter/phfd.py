"""PHFD writer.

Wire layout (integers little-endian):

    magic     4 bytes  b"PHFD"
    version   u16      1
    meta_len  u32      UTF-8 JSON metadata length
    metadata  bytes    JSON object carrying extractor_a / extractor_b
    records   until EOF:
        id_len  u16
        id      UTF-8
        level   u8
        vector  2000 x f32

Records are sorted by (id, level) so identical inputs produce identical
bytes. A CSV twin (``id,level,f0..f1999``) uses repr() per value so float32
values survive the text round-trip exactly.
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ExporterError

MAGIC = b"PHFD"
VERSION = 1
VECTOR_LEN = 2000
N_LEVELS = 4


def encode(records: dict[tuple[str, int], np.ndarray], metadata: dict) -> bytes:
    meta = dict(metadata)
    meta.setdefault("extractor_a", "unknown")
    meta.setdefault("extractor_b", "unknown")
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    for (image_id, level), vector in sorted(records.items()):
        vector = np.asarray(vector, dtype="<f4")
        if vector.shape != (VECTOR_LEN,):
            raise ExporterError(
                f"record {image_id}@L{level}: expected {VECTOR_LEN} floats, "
                f"got shape {vector.shape}"
            )
        if not np.isfinite(vector).all():
            raise ExporterError(f"record {image_id}@L{level}: non-finite values")
        if not 0 <= level < N_LEVELS:
            raise ExporterError(f"record {image_id}: level {level} out of range")
        id_bytes = image_id.encode("utf-8")
        buf.write(struct.pack("<H", len(id_bytes)))
        buf.write(id_bytes)
        buf.write(struct.pack("<B", level))
        buf.write(vector.tobytes())
    return buf.getvalue()


def encode_csv(records: dict[tuple[str, int], np.ndarray], metadata: dict) -> str:
    header = "id,level," + ",".join(f"f{i}" for i in range(VECTOR_LEN))
    lines = [header]
    for (image_id, level), vector in sorted(records.items()):
        vector = np.asarray(vector, dtype=np.float32)
        lines.append(
            f"{image_id},{level}," + ",".join(repr(float(v)) for v in vector)
        )
    return "\n".join(lines) + "\n"


def write(
    records: dict[tuple[str, int], np.ndarray],
    metadata: dict,
    path: str | Path,
    fmt: str = "phfd",
) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if fmt == "phfd":
        tmp.write_bytes(encode(records, metadata))
    elif fmt == "csv":
        tmp.write_text(encode_csv(records, metadata))
    else:
        raise ExporterError(f"unknown store format {fmt!r}")
    os.replace(tmp, path)
