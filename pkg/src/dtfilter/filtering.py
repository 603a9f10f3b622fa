"""Edge-aware recursive filtering of multi-channel score maps.

The filter runs a separable recursive smoothing pass four times per iteration
(rows left-to-right, rows right-to-left, columns top-to-bottom, columns
bottom-to-top).  A reference edge map modulates the per-pixel recursion
weights so that smoothing stops at strong edges.  The per-iteration spatial
scale shrinks geometrically so that the composed iterations realize the
requested overall spatial std.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .grids import (
    DensityMap,
    DtParams,
    EdgeMap,
    ScoreMap,
    WeightMap,
    assert_shapes_compatible,
)

SQRT2 = math.sqrt(2.0)

# One filtering iteration applies the four directional passes in this order.
# The order is observable (the operations do not commute) and is part of the
# output contract.
PASS_SEQUENCE: tuple[tuple[str, str], ...] = (
    ("row", "forward"),
    ("row", "backward"),
    ("col", "forward"),
    ("col", "backward"),
)


def sigma_schedule(sigma_s: float, iterations: int) -> np.ndarray:
    """Per-iteration spatial stds whose squares sum to sigma_s**2.

    Iteration k of K uses sigma_s * sqrt(3 * 4**(K-k) / (4**K - 1)), k = 1..K,
    a strictly decreasing sequence.  For K = 1 the result is exactly sigma_s.
    """
    if not (isinstance(sigma_s, (int, float)) and math.isfinite(sigma_s) and sigma_s > 0):
        raise InvalidParameterError(f"sigma_s must be finite and > 0, got {sigma_s!r}")
    if not (isinstance(iterations, int) and iterations >= 1):
        raise InvalidParameterError(f"iterations must be an integer >= 1, got {iterations!r}")
    k = np.arange(1, iterations + 1, dtype=np.float64)
    ratio = np.sqrt(3.0 * 4.0 ** (iterations - k) / (4.0**iterations - 1.0))
    return float(sigma_s) * ratio


def density_from_edges(g: EdgeMap, params: DtParams) -> DensityMap:
    """Warp density 1 + g * sigma_s / sigma_r; equals 1 where g is zero."""
    return DensityMap(_density(g.data, params))


def _density(g: np.ndarray, params: DtParams) -> np.ndarray:
    return 1.0 + g * (params.sigma_s / params.sigma_r)


def weights_from_density(d: DensityMap, sigma_k: float) -> WeightMap:
    """Recursion weights exp(-sqrt(2) * d / sigma_k) for one iteration."""
    if not (isinstance(sigma_k, (int, float)) and math.isfinite(sigma_k) and sigma_k > 0):
        raise InvalidParameterError(f"sigma_k must be finite and > 0, got {sigma_k!r}")
    return WeightMap(_weights(d.data, sigma_k))


def _weights(d: np.ndarray, sigma_k: float) -> np.ndarray:
    return np.exp(d * (-SQRT2 / sigma_k))


def gradient_magnitude_edges(image: ScoreMap) -> EdgeMap:
    """Sum over channels of the forward-difference gradient magnitude.

    Differences use replicate boundaries, so the last row and column see a
    zero difference in their clamped direction.
    """
    if image.channels != 3:
        raise ShapeMismatchError(
            f"expected a 3-channel image, got {image.channels} channels"
        )
    a = image.data
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1, :] = a[:, 1:, :] - a[:, :-1, :]
    gy[:-1, :, :] = a[1:, :, :] - a[:-1, :, :]
    return EdgeMap(np.sqrt(gx * gx + gy * gy).sum(axis=2))


def _scan_chunk(y: np.ndarray, w: np.ndarray, direction: str) -> None:
    """Run the recursive scan in place along axis 1 of y (lines, N, channels).

    On entry y holds the pass input; on exit it holds the pass output.  The
    update y_j = x_j + w_j * (y_prev - x_j) preserves constants exactly and,
    for w in [0, 1], keeps every output inside the input's value range.  The
    weight attached to the pair (j-1, j) is w[:, j] in both directions.
    """
    n = y.shape[1]
    buf = np.empty((y.shape[0], y.shape[2]), dtype=np.float64)
    if direction == "forward":
        for j in range(1, n):
            np.subtract(y[:, j - 1, :], y[:, j, :], out=buf)
            buf *= w[:, j, None]
            y[:, j, :] += buf
    else:
        for j in range(n - 2, -1, -1):
            np.subtract(y[:, j + 1, :], y[:, j, :], out=buf)
            buf *= w[:, j + 1, None]
            y[:, j, :] += buf


def _scan(x: np.ndarray, w: np.ndarray, direction: str, threads: int = 1) -> np.ndarray:
    """Recursive scan along axis 1 of a (lines, N, channels) stack.

    Lines are independent, so with threads > 1 the line axis is split into
    contiguous chunks processed concurrently; chunk outputs are disjoint
    slices, which keeps the result bitwise identical to the serial scan.
    """
    y = np.array(x, dtype=np.float64, order="C", copy=True)
    if y.shape[1] == 1:
        return y
    lines = y.shape[0]
    if threads <= 1 or lines < 2 * threads:
        _scan_chunk(y, w, direction)
        return y
    bounds = np.linspace(0, lines, threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        jobs = [
            pool.submit(_scan_chunk, y[lo:hi], w[lo:hi], direction)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        for job in jobs:
            job.result()
    return y


def filter_1d_pass(x: np.ndarray, w: np.ndarray, direction: str) -> np.ndarray:
    """One directional recursive pass over a 1-D signal.

    forward:  y[0] = x[0];  y[j] = x[j] + w[j] * (y[j-1] - x[j])
    backward: y[-1] = x[-1]; y[j] = x[j] + w[j+1] * (y[j+1] - x[j])
    """
    if direction not in ("forward", "backward"):
        raise InvalidParameterError(f"direction must be 'forward' or 'backward', got {direction!r}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if x.ndim != 1 or w.ndim != 1 or x.shape != w.shape:
        raise ShapeMismatchError(
            f"signal and weights must be equal-length 1-D arrays, got {x.shape} and {w.shape}"
        )
    if x.size < 1:
        raise ShapeMismatchError("signal must have at least one element")
    return _scan(x[None, :, None], w[None, :], direction)[0, :, 0]


@dataclass
class PassRecord:
    """Input snapshot of one directional pass, in image orientation."""

    axis: str  # 'row' or 'col'
    direction: str  # 'forward' or 'backward'
    x: np.ndarray  # (H, W, C) pass input


@dataclass
class DtTape:
    """Everything the reverse-mode sweep needs to replay a forward filter run.

    `passes` holds the 4 * iterations pass-input snapshots in execution order;
    `weights` holds one (H, W) weight map per iteration.
    """

    params: DtParams
    edges: EdgeMap
    sigmas: np.ndarray
    shape: tuple[int, int, int]
    weights: list[np.ndarray] = field(default_factory=list)
    passes: list[PassRecord] = field(default_factory=list)


def filter_2d(
    x: ScoreMap,
    g: EdgeMap,
    params: DtParams,
    record_tape: bool = False,
    threads: int = 1,
) -> tuple[ScoreMap, DtTape | None]:
    """Filter a score map under a reference edge map.

    Runs `params.iterations` rounds of the four directional passes with the
    per-iteration spatial stds from `sigma_schedule`.  All channels share the
    same weights.  With record_tape=True the returned tape snapshots every
    pass input (4K copies of the map) for the reverse-mode sweep.
    """
    assert_shapes_compatible(x, g)
    if not (isinstance(threads, int) and threads >= 1):
        raise InvalidParameterError(f"threads must be an integer >= 1, got {threads!r}")
    sigmas = sigma_schedule(params.sigma_s, params.iterations)
    d = _density(g.data, params)
    tape = None
    if record_tape:
        tape = DtTape(
            params=params,
            edges=g,
            sigmas=sigmas,
            shape=(x.height, x.width, x.channels),
        )
    cur = x.data
    for sigma_k in sigmas:
        w = _weights(d, float(sigma_k))
        if tape is not None:
            tape.weights.append(w)
        for axis, direction in PASS_SEQUENCE:
            if tape is not None:
                tape.passes.append(
                    PassRecord(axis, direction, np.array(cur, order="C", copy=True))
                )
            if axis == "row":
                cur = _scan(cur, w, direction, threads)
            else:
                cur = _scan(
                    cur.transpose(1, 0, 2), w.T, direction, threads
                ).transpose(1, 0, 2)
    return ScoreMap(np.ascontiguousarray(cur)), tape
