"""Local phase quantization: 8-bit codes from four windowed Fourier samples.

Every interior pixel gets an M x M window (default 5x5) analyzed at the four
lowest nonzero frequency pairs u1=(a,0), u2=(0,a), u3=(a,a), u4=(a,-a) with
a = 1/M cycles per sample; window offsets are centered on the pixel. The
8-vector [Re G1..G4, Im G1..G4] is sign-quantized (>= 0 -> 1, component i
weighting 2**(i-1)) into a code in [0, 255], and the histogram over all
(H-M+1)(W-M+1) positions has 256 bins. No whitening or decorrelation is
applied to the coefficients.

At these frequencies every basis sums to zero over the window, so the
transform ignores the window's DC component. The implementation subtracts
the center value from each window before applying the basis: an exact-
arithmetic no-op that keeps the zero response to constant windows exact in
floating point (a constant window codes to 255 rather than noise-sign
garbage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .imagecore import ChannelPlane

N_FREQS = 4
N_BINS = 256


@dataclass(frozen=True)
class LpqConfig:
    """Window size M (odd, >= 3) and frequency parameter a (default 1/M)."""

    window: int = 5
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError(f"LPQ window must be odd and >= 3, got {self.window}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.window)
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError(f"LPQ alpha must lie in (0, 0.5), got {self.alpha}")


def _freq_bases(config: LpqConfig) -> np.ndarray:
    """(4, M, M) complex bases e^(-2j*pi*(u*x + v*y)) on centered offsets."""
    m = config.window
    r = m // 2
    offsets = np.arange(m) - r
    ex = np.exp(-2j * np.pi * config.alpha * offsets)
    one = np.ones(m, dtype=np.complex128)
    return np.stack(
        [
            np.outer(ex, one),            # u1 = (a, 0)
            np.outer(one, ex),            # u2 = (0, a)
            np.outer(ex, ex),             # u3 = (a, a)
            np.outer(ex, ex.conj()),      # u4 = (a, -a)
        ]
    )


def _as_values(plane: np.ndarray | ChannelPlane) -> np.ndarray:
    values = plane.values if isinstance(plane, ChannelPlane) else np.asarray(plane)
    return np.asarray(values, dtype=np.float64)


def stft_coeffs(
    plane: np.ndarray | ChannelPlane,
    center: tuple[int, int],
    config: LpqConfig | None = None,
) -> np.ndarray:
    """The four windowed Fourier coefficients at one interior pixel."""
    config = config or LpqConfig()
    values = _as_values(plane)
    r = config.window // 2
    row, col = center
    if not (r <= row < values.shape[0] - r and r <= col < values.shape[1] - r):
        raise ValidationError(
            f"window does not fit: center {center} in plane {values.shape}"
        )
    window = values[row - r : row + r + 1, col - r : col + r + 1]
    window = window - window[r, r]
    bases = _freq_bases(config)
    return np.tensordot(bases, window.astype(np.complex128), axes=([1, 2], [0, 1]))


def lpq_code(coeffs: np.ndarray) -> int:
    """Sign-quantize [Re G1..G4, Im G1..G4]; component i is bit 2**(i-1)."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (N_FREQS,):
        raise ValidationError(f"expected {N_FREQS} coefficients, got {coeffs.shape}")
    parts = np.concatenate([coeffs.real, coeffs.imag])
    bits = (parts >= 0.0).astype(np.int64)
    return int((bits << np.arange(8)).sum())


def lpq_codes(
    plane: np.ndarray | ChannelPlane, config: LpqConfig | None = None
) -> np.ndarray:
    """Code plane over all (H-M+1) x (W-M+1) window positions."""
    config = config or LpqConfig()
    values = _as_values(plane)
    m = config.window
    if values.ndim != 2 or values.shape[0] < m or values.shape[1] < m:
        raise ValidationError(
            f"LPQ needs a 2-D plane of at least {m}x{m}, got {values.shape}"
        )
    r = m // 2
    windows = sliding_window_view(values, (m, m))  # (H-M+1, W-M+1, M, M)
    centered = windows - windows[:, :, r, r][:, :, None, None]
    bases = _freq_bases(config)
    coeffs = np.tensordot(centered, bases, axes=([2, 3], [1, 2]))  # (..., 4)
    parts = np.concatenate([coeffs.real, coeffs.imag], axis=-1)
    bits = (parts >= 0.0).astype(np.int64)
    return (bits << np.arange(8)).sum(axis=-1)


def lpq_histogram(
    plane: np.ndarray | ChannelPlane, config: LpqConfig | None = None
) -> np.ndarray:
    """256-bin code histogram; counts sum to (H-M+1)*(W-M+1)."""
    codes = lpq_codes(plane, config)
    return np.bincount(codes.ravel(), minlength=N_BINS)
