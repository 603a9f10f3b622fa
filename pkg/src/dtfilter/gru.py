"""Correspondence between the recursive filter and a degenerate GRU step.

One directional pass y_j = (1 - w_j) x_j + w_j y_{j-1} is a GRU update whose
gate is z = 1 - w and whose candidate state is the raw input.  Conversely, a
gate produced by a sigmoid over an activation f corresponds to an edge value
that makes the filter weight equal 1 - sigmoid(f); that edge value is
(sigma_r / sigma_s) * ((sigma_k / sqrt(2)) * softplus(f) - 1) and may be
negative for small activations, which is reported as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .filtering import SQRT2


@dataclass(frozen=True)
class GruCorrespondence:
    """Scale bundle tying a gate to one filter iteration."""

    sigma_s: float
    sigma_r: float
    sigma_k: float

    def __post_init__(self) -> None:
        for name in ("sigma_s", "sigma_r", "sigma_k"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")


def softplus(f: float) -> float:
    """log(1 + exp(f)) computed without overflow for large |f|."""
    f = float(f)
    return max(f, 0.0) + math.log1p(math.exp(-abs(f)))


def weight_to_gate(w: float) -> float:
    """Update gate 1 - w of the equivalent degenerate GRU step."""
    if not (isinstance(w, (int, float)) and math.isfinite(w) and 0.0 < w <= 1.0):
        raise InvalidParameterError(f"weight must lie in (0, 1], got {w!r}")
    return 1.0 - float(w)


def activation_to_edge(f: float, corr: GruCorrespondence) -> float:
    """Edge value whose filter weight reproduces the gate sigmoid(f).

    Returned unclamped: activations with softplus(f) < sqrt(2)/sigma_k map to
    negative edge values.
    """
    if not (isinstance(f, (int, float)) and math.isfinite(f)):
        raise InvalidParameterError(f"activation must be finite, got {f!r}")
    return (corr.sigma_r / corr.sigma_s) * (corr.sigma_k / SQRT2 * softplus(f) - 1.0)


def verify_gate_equivalence(f: float, corr: GruCorrespondence) -> float:
    """Residual |(1 - w(g(f))) - sigmoid(f)| of the gate correspondence.

    Pushes the activation through activation_to_edge, the density, and the
    weight exponential, then compares the resulting gate against the direct
    sigmoid.  Analytically zero; numerically a few ulp.
    """
    g = activation_to_edge(f, corr)
    d = 1.0 + g * (corr.sigma_s / corr.sigma_r)
    w = math.exp(-SQRT2 * d / corr.sigma_k)
    sig = 1.0 / (1.0 + math.exp(-float(f))) if f >= 0 else math.exp(f) / (1.0 + math.exp(f))
    return abs((1.0 - w) - sig)


def gru_scan(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Degenerate GRU recurrence y_j = z_j x_j + (1 - z_j) y_{j-1}, y_0 = x_0.

    With z = 1 - w this reproduces a forward filter pass.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if x.ndim != 1 or x.shape != z.shape:
        raise InvalidParameterError(
            f"x and z must be equal-length 1-D arrays, got {x.shape} and {z.shape}"
        )
    y = x.copy()
    for j in range(1, x.size):
        y[j] = z[j] * x[j] + (1.0 - z[j]) * y[j - 1]
    return y
