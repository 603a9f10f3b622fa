"""Dense per-pixel map types shared by the filtering, gradient, and training code.

Every map stores float64 values in row-major, channel-innermost order: the flat
index of element (i, j, c) is (i * width + j) * channels + c.  That is exactly
the memory layout of a C-contiguous numpy array of shape (H, W, C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, ShapeMismatchError


def _as_grid(data, ndim: int, name: str) -> np.ndarray:
    """Validate and normalize a map payload to a contiguous float64 array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidDimensionError(
            f"{name} must have {ndim} dimensions, got shape {arr.shape}"
        )
    if min(arr.shape) < 1:
        raise InvalidDimensionError(
            f"{name} dimensions must all be >= 1, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise InvalidParameterError(f"{name} values must all be finite")
    return arr


@dataclass
class ScoreMap:
    """H x W x C map of per-pixel, per-channel scores (filter input and output)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = _as_grid(self.data, 3, "ScoreMap")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def get(self, i: int, j: int, c: int) -> float:
        return float(self.data[i, j, c])

    def set(self, i: int, j: int, c: int, value: float) -> None:
        if not math.isfinite(value):
            raise InvalidParameterError(f"ScoreMap values must be finite, got {value!r}")
        self.data[i, j, c] = value


@dataclass
class EdgeMap:
    """H x W map of nonnegative reference edge strengths."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = _as_grid(self.data, 2, "EdgeMap")
        if (self.data < 0.0).any():
            raise InvalidParameterError("EdgeMap values must be >= 0")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class DensityMap:
    """H x W map of local warp densities; always >= 1 by construction."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = _as_grid(self.data, 2, "DensityMap")
        if (self.data < 1.0).any():
            raise InvalidParameterError("DensityMap values must be >= 1")


@dataclass
class WeightMap:
    """H x W map of recursion weights in [0, 1].

    Mathematically the weights are strictly positive; a stored 0.0 only occurs
    when the underlying exponential underflows, which is accepted.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = _as_grid(self.data, 2, "WeightMap")
        if (self.data < 0.0).any() or (self.data > 1.0).any():
            raise InvalidParameterError("WeightMap values must lie in [0, 1]")


@dataclass(frozen=True)
class DtParams:
    """Filter hyper-parameters: spatial std, range std, and iteration count."""

    sigma_s: float
    sigma_r: float
    iterations: int

    def __post_init__(self) -> None:
        if not (isinstance(self.sigma_s, (int, float)) and math.isfinite(self.sigma_s)
                and self.sigma_s > 0):
            raise InvalidParameterError(f"sigma_s must be finite and > 0, got {self.sigma_s!r}")
        if not (isinstance(self.sigma_r, (int, float)) and math.isfinite(self.sigma_r)
                and self.sigma_r > 0):
            raise InvalidParameterError(f"sigma_r must be finite and > 0, got {self.sigma_r!r}")
        if not (isinstance(self.iterations, int) and self.iterations >= 1):
            raise InvalidParameterError(
                f"iterations must be an integer >= 1, got {self.iterations!r}"
            )


def new_score_map(height: int, width: int, channels: int, fill: float = 0.0) -> ScoreMap:
    """Allocate an H x W x C map with every element set to `fill`."""
    for name, value in (("height", height), ("width", width), ("channels", channels)):
        if not (isinstance(value, int) and value >= 1):
            raise InvalidDimensionError(f"{name} must be an integer >= 1, got {value!r}")
    if not math.isfinite(fill):
        raise InvalidParameterError(f"fill must be finite, got {fill!r}")
    return ScoreMap(np.full((height, width, channels), fill, dtype=np.float64))


def assert_shapes_compatible(x: ScoreMap, g: EdgeMap) -> None:
    """Raise unless the score map and edge map share the same H x W extent."""
    if (x.height, x.width) != (g.height, g.width):
        raise ShapeMismatchError(
            f"score map is {x.height}x{x.width}x{x.channels} but edge map is "
            f"{g.height}x{g.width}; spatial extents must match"
        )
