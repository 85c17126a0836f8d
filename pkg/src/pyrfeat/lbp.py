"""Local binary patterns over 3x3 blocks with the 59-bin uniform mapping.

Each interior pixel is coded from its 8 neighbors taken clockwise from the
top-left corner. Neighbor k (1-based) contributes 2**(k-1) when its value
is greater than or equal to the center, so ties count as 1 and neighbor 1
is the least significant bit. Codes whose circular bit sequence has at most
two 0/1 transitions are "uniform"; the 58 uniform codes map to bins 0..57
in ascending code order and everything else shares bin 58.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .imagecore import ChannelPlane

N_NEIGHBORS = 8
N_BINS = 59

# Clockwise from top-left: (row offset, col offset) relative to the center.
_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, 1),
    (1, 1), (1, 0),
    (1, -1), (0, -1),
)


def lbp_feature_size(n_neighbors: int = N_NEIGHBORS) -> int:
    """Histogram length for the uniform mapping: N*(N-1) + 3."""
    if n_neighbors < 2:
        raise ValidationError("need at least 2 neighbors")
    return n_neighbors * (n_neighbors - 1) + 3


def _circular_transitions(code: int) -> int:
    rotated = ((code >> 1) | (code << (N_NEIGHBORS - 1))) & 0xFF
    return bin(code ^ rotated).count("1")


@lru_cache(maxsize=1)
def uniform_map() -> np.ndarray:
    """Lookup table: raw code 0..255 -> histogram bin 0..58."""
    table = np.full(256, N_BINS - 1, dtype=np.int64)
    label = 0
    for code in range(256):
        if _circular_transitions(code) <= 2:
            table[code] = label
            label += 1
    assert label == N_BINS - 1
    return table


def lbp_code(block: np.ndarray) -> int:
    """Code for one 3x3 block."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (3, 3):
        raise ValidationError(f"lbp_code expects a 3x3 block, got {block.shape}")
    center = block[1, 1]
    code = 0
    for k, (dr, dc) in enumerate(_OFFSETS):
        if block[1 + dr, 1 + dc] >= center:
            code |= 1 << k
    return code


def _as_values(plane: np.ndarray | ChannelPlane) -> np.ndarray:
    values = plane.values if isinstance(plane, ChannelPlane) else np.asarray(plane)
    return np.asarray(values, dtype=np.float64)


def lbp_codes(plane: np.ndarray | ChannelPlane) -> np.ndarray:
    """Raw code plane over all (H-2) x (W-2) interior positions."""
    values = _as_values(plane)
    if values.ndim != 2 or values.shape[0] < 3 or values.shape[1] < 3:
        raise ValidationError("LBP needs a 2-D plane of at least 3x3")
    center = values[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dr, dc) in enumerate(_OFFSETS):
        neighbor = values[1 + dr : values.shape[0] - 1 + dr,
                          1 + dc : values.shape[1] - 1 + dc]
        codes |= (neighbor >= center).astype(np.int64) << k
    return codes


def lbp_histogram(plane: np.ndarray | ChannelPlane) -> np.ndarray:
    """59-bin uniform-pattern histogram; counts sum to (H-2)*(W-2)."""
    labels = uniform_map()[lbp_codes(plane)]
    return np.bincount(labels.ravel(), minlength=N_BINS)
