"""Binary SVM with a cubic polynomial kernel, trained by SMO.

Kernel: K(x, y) = (1 + <x, y>/s)^3 with scale s defaulting to the feature
count. Labels are +/-1 internally (dataset label 0 -> -1, 1 -> +1); a
decision value of exactly zero classifies as +1.

Training solves the standard box-constrained dual (0 <= alpha_i <= C,
sum alpha_i y_i = 0) by sequential minimal optimization with
max-violating-pair working-set selection: the step direction is
alpha += lambda * (y_i e_i - y_j e_j) where i maximizes y G over
coordinates free to grow and j minimizes it over coordinates free to
shrink (G is the dual gradient). Ties resolve to the lowest index, so
training is deterministic. Every step increases the dual objective.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import StoreFormatError, ValidationError

DEGREE = 3
OFFSET = 1.0


@dataclass(frozen=True)
class KernelParams:
    """scale: inner-product divisor s (None -> feature count); C: box bound."""

    scale: float | None = None
    C: float = 1.0

    def __post_init__(self) -> None:
        if self.scale is not None and self.scale <= 0:
            raise ValidationError(f"kernel scale must be positive, got {self.scale}")
        if self.C <= 0:
            raise ValidationError(f"C must be positive, got {self.C}")

    def resolve_scale(self, n_features: int) -> float:
        return float(self.scale) if self.scale is not None else float(n_features)


def kernel_matrix(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    """(len(a), len(b)) cubic-kernel Gram block."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (OFFSET + a @ b.T / scale) ** DEGREE


def kernel(x: np.ndarray, y: np.ndarray, scale: float) -> float:
    return float((OFFSET + np.dot(x, y) / scale) ** DEGREE)


@dataclass
class SvmModel:
    """Support vectors, their dual coefficients alpha_i * y_i, and the bias."""

    support_vectors: np.ndarray   # (n_sv, d) float64
    dual_coef: np.ndarray         # (n_sv,) float64, alpha_i * y_i
    bias: float
    scale: float
    C: float
    n_iter: int = 0
    kkt_violation: float = 0.0
    objective_trace: list[float] = field(default_factory=list)

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        k = kernel_matrix(x, self.support_vectors, self.scale)
        return k @ self.dual_coef + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Dataset labels 0/1; a zero decision value maps to 1."""
        return (self.decision(x) >= 0.0).astype(np.int64)


def _to_signed(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    unique = set(np.unique(labels).tolist())
    if unique <= {0, 1}:
        return np.where(labels == 1, 1.0, -1.0)
    if unique <= {-1, 1}:
        return labels.astype(np.float64)
    raise ValidationError(f"labels must be binary 0/1 (or +/-1), got {sorted(unique)}")


def train(
    x: np.ndarray,
    labels: np.ndarray,
    params: KernelParams | None = None,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> SvmModel:
    """Fit the dual by SMO; raises on single-class input or non-convergence."""
    params = params or KernelParams()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("training matrix must be 2-D")
    y = _to_signed(labels)
    if len(y) != x.shape[0]:
        raise ValidationError("labels and rows must align")
    if np.all(y == y[0]):
        raise ValidationError("training set contains a single class")
    n = x.shape[0]
    scale = params.resolve_scale(x.shape[1])
    c = params.C
    gram = kernel_matrix(x, x, scale)

    alpha = np.zeros(n)
    # G_k = dW/dalpha_k = 1 - y_k * sum_l alpha_l y_l K_kl; starts at 1.
    grad = np.ones(n)
    # alpha_i can grow while y_i alpha_i < B_i; shrink while y_i alpha_i > A_i.
    upper = np.where(y > 0, c, 0.0)   # B
    lower = np.where(y > 0, 0.0, -c)  # A
    trace: list[float] = []
    violation = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ya = y * alpha
        yg = y * grad
        can_grow = ya < upper - 1e-12
        can_shrink = ya > lower + 1e-12
        grow_score = np.where(can_grow, yg, -np.inf)
        shrink_score = np.where(can_shrink, yg, np.inf)
        i = int(np.argmax(grow_score))
        j = int(np.argmin(shrink_score))
        violation = grow_score[i] - shrink_score[j]
        if violation <= tol:
            it -= 1  # the final scan performed no update
            break
        curvature = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        room_i = upper[i] - ya[i]
        room_j = ya[j] - lower[j]
        lam = min(room_i, room_j)
        if curvature > 1e-12:
            lam = min(lam, violation / curvature)
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        grad -= lam * y * (gram[:, i] - gram[:, j])
        # W(alpha) = sum(alpha) - alpha'Q alpha / 2 = (sum(alpha) + alpha'G) / 2
        trace.append(float(0.5 * (alpha.sum() + alpha @ grad)))
    else:
        raise ValidationError(
            f"SMO did not converge in {max_iter} iterations "
            f"(violation {violation:.3e} > tol {tol:.0e})"
        )

    # Bias from free support vectors (y_k - v_k == y_k * G_k there), or the
    # midpoint of the remaining violation bracket when none are free.
    ya = y * alpha
    yg = y * grad
    free = (alpha > 1e-12) & (alpha < c - 1e-12)
    if free.any():
        bias = float(yg[free].mean())
    else:
        hi = np.where(ya < upper - 1e-12, yg, -np.inf).max()
        lo = np.where(ya > lower + 1e-12, yg, np.inf).min()
        bias = float((hi + lo) / 2.0)

    support = alpha > 1e-12
    return SvmModel(
        support_vectors=x[support].copy(),
        dual_coef=(alpha * y)[support],
        bias=bias,
        scale=scale,
        C=c,
        n_iter=it,
        kkt_violation=float(max(violation, 0.0)),
        objective_trace=trace,
    )


def dual_feasibility(model: SvmModel) -> tuple[float, float]:
    """(max box violation, |sum alpha_i y_i|) for invariant checks."""
    alpha = np.abs(model.dual_coef)
    box = float(max(0.0, (alpha - model.C).max(initial=0.0), (-alpha).max(initial=0.0)))
    return box, float(abs(model.dual_coef.sum()))


MODEL_MAGIC = b"PSVM"
MODEL_VERSION = 1


def save_model(model: SvmModel, path: str | Path) -> None:
    """Versioned binary: JSON header + f64 dual coefficients and vectors."""
    header = {
        "n_sv": int(model.support_vectors.shape[0]),
        "dim": int(model.support_vectors.shape[1]),
        "bias": model.bias,
        "scale": model.scale,
        "C": model.C,
        "n_iter": model.n_iter,
        "kkt_violation": model.kkt_violation,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = (
        MODEL_MAGIC
        + struct.pack("<HI", MODEL_VERSION, len(blob))
        + blob
        + model.dual_coef.astype("<f8").tobytes()
        + model.support_vectors.astype("<f8").tobytes()
    )
    Path(path).write_bytes(payload)


def load_model(path: str | Path) -> SvmModel:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise StoreFormatError(f"{path}: missing model magic")
    version, header_len = struct.unpack_from("<HI", data, 4)
    if version != MODEL_VERSION:
        raise StoreFormatError(f"{path}: unsupported model version {version}")
    pos = 10
    header = json.loads(data[pos : pos + header_len].decode())
    pos += header_len
    n_sv, dim = header["n_sv"], header["dim"]
    expected = n_sv * 8 + n_sv * dim * 8
    if len(data) - pos != expected:
        raise StoreFormatError(f"{path}: model payload size mismatch")
    dual = np.frombuffer(data, dtype="<f8", count=n_sv, offset=pos).copy()
    pos += n_sv * 8
    sv = np.frombuffer(data, dtype="<f8", offset=pos).reshape(n_sv, dim).copy()
    return SvmModel(
        support_vectors=sv,
        dual_coef=dual,
        bias=header["bias"],
        scale=header["scale"],
        C=header["C"],
        n_iter=header["n_iter"],
        kkt_violation=header["kkt_violation"],
    )
