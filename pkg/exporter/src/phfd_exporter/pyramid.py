"""db4 approximation pyramid, matching the consumer pipeline's convention:
periodized low-pass cascade with ceil-halving, odd axes extended by
repeating the final sample, three levels on top of the raw image.

A "symmetric" boundary mode exists solely so the parity checker can
demonstrate that a mismatched extension is caught: interior coefficients
agree with the periodic mode, border ones do not.
"""

from __future__ import annotations

import numpy as np

from .errors import ExporterConfigError

# Daubechies-4 scaling filter (8 taps, orthonormal tabulation).
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

N_LEVELS = 3
MIN_AXIS = 8
MODES = ("periodic", "symmetric")


def _even_length(x: np.ndarray) -> np.ndarray:
    if x.shape[0] % 2:
        return np.concatenate([x, x[-1:]], axis=0)
    return x


def _halve_axis0(x: np.ndarray, mode: str) -> np.ndarray:
    """Low-pass filter + dyadic downsample along axis 0."""
    x = _even_length(x)
    n = x.shape[0]
    out = np.zeros((n // 2,) + x.shape[1:])
    if mode == "periodic":
        for t, h in enumerate(DB4_LO):
            out += h * np.roll(x, -t, axis=0)[::2]
    else:
        # reflect past the end; leading taps align exactly with periodic
        ext = np.concatenate([x, x[-2 : -2 - len(DB4_LO) : -1]], axis=0)
        for t, h in enumerate(DB4_LO):
            out += h * ext[t : t + n : 2]
    return out


def approx_plane(plane: np.ndarray, mode: str = "periodic") -> np.ndarray:
    """One LL step: rows then columns through the scaling filter."""
    if mode not in MODES:
        raise ExporterConfigError(f"unknown boundary mode {mode!r}")
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or min(plane.shape) < MIN_AXIS:
        raise ExporterConfigError(
            f"plane must be 2-D with both sides >= {MIN_AXIS}, got {plane.shape}"
        )
    rows_done = _halve_axis0(plane, mode)
    return _halve_axis0(rows_done.T, mode).T


def shape_chain(height: int, width: int, levels: int = N_LEVELS) -> list[tuple[int, int]]:
    chain = [(height, width)]
    h, w = height, width
    for _ in range(levels):
        h, w = (h + 1) // 2, (w + 1) // 2
        chain.append((h, w))
    return chain


def build_pyramid(
    pixels: np.ndarray, levels: int = N_LEVELS, mode: str = "periodic"
) -> list[np.ndarray]:
    """[raw, LL1, .., LLn] as float64 (H, W, 3) stacks."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ExporterConfigError(f"expected an (H, W, 3) image, got {pixels.shape}")
    for level, (h, w) in enumerate(shape_chain(pixels.shape[0], pixels.shape[1], levels)):
        if h < MIN_AXIS or w < MIN_AXIS:
            raise ExporterConfigError(
                f"pyramid level {level} plane {h}x{w} is below the "
                f"{MIN_AXIS}-pixel minimum"
            )
    current = pixels.astype(np.float64)
    out = [current]
    for _ in range(levels):
        current = np.stack(
            [approx_plane(current[:, :, c], mode) for c in range(3)], axis=2
        )
        out.append(current)
    return out


def quantize_plane(plane: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 255] and round to uint8; constants map to 0."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = plane.min(), plane.max()
    if hi == lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.rint((plane - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def rescale_unit_range(plane: np.ndarray) -> np.ndarray:
    """The quantization transform without the integer cast: min-max to
    [0, 255] as float64. Used to compare planes on a common scale."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = plane.min(), plane.max()
    if hi == lo:
        return np.zeros(plane.shape)
    return (plane - lo) * (255.0 / (hi - lo))
