"""Two-dimensional Daubechies-4 wavelet transform with periodic extension.

The pipeline only consumes the LL chain (raw, LL1, LL2, LL3) but the full
four-band analysis and its exact inverse are kept so the transform can be
verified round-trip. Filtering is separable (rows, then columns), signals
are extended periodically, and each axis halves to ceil(n/2): odd axes are
periodized by repeating the final sample before filtering.

With even axis lengths >= 8 the periodized transform is orthonormal, so
analysis conserves energy exactly and the inverse is the transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .imagecore import Image

# Orthonormal Daubechies-4 scaling coefficients (8 taps), standard tabulation.
DB4_LO = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)

# Quadrature mirror: g[m] = (-1)^m h[L-1-m]
DB4_HI = (DB4_LO[::-1] * np.where(np.arange(8) % 2 == 0, 1.0, -1.0)).copy()

_FILTER_LEN = len(DB4_LO)
MIN_AXIS = _FILTER_LEN  # shortest axis the periodized filters can cover

PYRAMID_LEVELS = 3
PYRAMID_MIN_DIM = 64  # keeps the deepest plane large enough for texture windows


def _verify_filters() -> None:
    # DC gain sqrt(2) for the scaling filter, zero for the wavelet filter,
    # unit energy for both: the orthonormality the whole module rests on.
    if abs(DB4_LO.sum() - np.sqrt(2.0)) > 1e-12:
        raise AssertionError("db4 scaling filter does not sum to sqrt(2)")
    if abs(DB4_HI.sum()) > 1e-12:
        raise AssertionError("db4 wavelet filter does not sum to 0")
    for filt in (DB4_LO, DB4_HI):
        if abs(np.dot(filt, filt) - 1.0) > 1e-12:
            raise AssertionError("db4 filter is not unit-energy")
    for shift in (2, 4, 6):
        if abs(np.dot(DB4_LO[:-shift], DB4_LO[shift:])) > 1e-12:
            raise AssertionError("db4 scaling filter not orthogonal to its even shifts")


_verify_filters()


@dataclass(frozen=True)
class WaveletBands:
    """One analysis level: low-low, low-high, high-low, high-high."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self) -> None:
        shape = self.ll.shape
        for name in ("lh", "hl", "hh"):
            if getattr(self, name).shape != shape:
                raise ValidationError("wavelet bands must share one shape")


@dataclass(frozen=True)
class Pyramid:
    """Level-0 raw plane stack plus the LL plane of each analysis level."""

    levels: tuple[np.ndarray, ...]  # each (H_k, W_k, 3) float64


def _pad_even_axis0(x: np.ndarray) -> np.ndarray:
    if x.shape[0] % 2:
        return np.concatenate([x, x[-1:]], axis=0)
    return x


def _analyze_axis0(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Periodic filter + downsample along axis 0. Returns (low, high)."""
    x = _pad_even_axis0(x)
    n = x.shape[0]
    starts = 2 * np.arange(n // 2)
    idx = (starts[:, None] + np.arange(_FILTER_LEN)[None, :]) % n
    windows = x[idx]  # (n//2, taps, ...)
    lo = np.tensordot(windows, DB4_LO, axes=([1], [0]))
    hi = np.tensordot(windows, DB4_HI, axes=([1], [0]))
    return lo, hi


def _synthesize_axis0(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Transpose of _analyze_axis0 for an even-length original axis."""
    half = lo.shape[0]
    n = 2 * half
    out = np.zeros((n,) + lo.shape[1:], dtype=np.float64)
    starts = 2 * np.arange(half)
    idx = (starts[:, None] + np.arange(_FILTER_LEN)[None, :]) % n
    for m in range(_FILTER_LEN):
        np.add.at(out, idx[:, m], DB4_LO[m] * lo + DB4_HI[m] * hi)
    return out


def dwt2(plane: np.ndarray) -> WaveletBands:
    """One 2-D analysis level of a real plane.

    Both axes must be at least 8 samples. Output bands have shape
    (ceil(H/2), ceil(W/2)). For even axes the transform is orthonormal:
    the summed squared band coefficients equal the input energy.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValidationError("dwt2 expects a 2-D plane")
    h, w = plane.shape
    if h < MIN_AXIS or w < MIN_AXIS:
        raise ValidationError(
            f"dwt2 needs both axes >= {MIN_AXIS}, got {h}x{w}"
        )
    lo_r, hi_r = _analyze_axis0(plane.T)  # filter along rows (width axis)
    lo_r, hi_r = lo_r.T, hi_r.T
    ll, lh = _analyze_axis0(lo_r)
    hl, hh = _analyze_axis0(hi_r)
    return WaveletBands(ll=ll, lh=lh, hl=hl, hh=hh)


def idwt2(bands: WaveletBands, out_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Exact inverse of dwt2.

    For an odd-length original axis, dwt2 periodized by repeating the last
    sample; pass ``out_shape`` to trim the reconstruction back.
    """
    lo_r = _synthesize_axis0(bands.ll, bands.lh)
    hi_r = _synthesize_axis0(bands.hl, bands.hh)
    plane = _synthesize_axis0(lo_r.T, hi_r.T).T
    if out_shape is not None:
        plane = plane[: out_shape[0], : out_shape[1]]
    return plane


def pyramid_shape_chain(height: int, width: int, levels: int = PYRAMID_LEVELS) -> list[tuple[int, int]]:
    """Plane sizes [level 0 .. level ``levels``] under repeated halving."""
    chain = [(height, width)]
    h, w = height, width
    for _ in range(levels):
        h, w = (h + 1) // 2, (w + 1) // 2
        chain.append((h, w))
    return chain


def build_pyramid(image: Image, levels: int = PYRAMID_LEVELS) -> Pyramid:
    """Raw plane stack plus per-channel LL planes of ``levels`` cascade steps.

    Each level keeps the real-valued LL coefficients (a constant-color image
    doubles per level: the scaling filter's DC gain is sqrt(2) per axis).
    Requires every plane in the chain to stay at least 8 pixels per axis,
    which any image of 64 pixels or more per side satisfies.
    """
    chain = pyramid_shape_chain(image.height, image.width, levels)
    for level, (h, w) in enumerate(chain):
        if h < MIN_AXIS or w < MIN_AXIS:
            raise ValidationError(
                f"image {image.id!r}: pyramid level {level} plane {h}x{w} is below "
                f"the {MIN_AXIS}-pixel minimum (need >= {PYRAMID_MIN_DIM} per side "
                f"at level 0)"
            )
    current = image.pixels.astype(np.float64)
    out = [current]
    for _ in range(levels):
        ll = np.stack([dwt2(current[:, :, c]).ll for c in range(3)], axis=2)
        out.append(ll)
        current = ll
    return Pyramid(levels=tuple(out))


def quantize_plane(plane: np.ndarray) -> np.ndarray:
    """Min-max rescale a real plane to [0, 255] and round to uint8.

    Texture descriptors consume 8-bit intensities; LL coefficients are
    stretched per plane. A constant plane has no range and maps to 0,
    which the shift-invariant descriptors treat identically.
    """
    plane = np.asarray(plane, dtype=np.float64)
    lo = plane.min()
    hi = plane.max()
    if hi == lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    scaled = (plane - lo) * (255.0 / (hi - lo))
    return np.rint(scaled).astype(np.uint8)
