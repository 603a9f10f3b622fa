"""Reverse-mode differentiation through the recursive filter.

Each directional pass is a linear recurrence in the signal for fixed weights,
so its adjoint is the mirrored recurrence on the upstream gradient.  Walking
the recorded passes in reverse order yields exact gradients with respect to
both the filtered scores and the reference edge map.  Two independent oracles
(central differences and a fully unrolled forward-mode Jacobian) back the
analytic sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DomainViolationError,
    InvalidParameterError,
    ShapeMismatchError,
    TapeError,
)
from .filtering import PASS_SEQUENCE, SQRT2, DtTape, _scan, filter_2d
from .grids import DtParams, EdgeMap, ScoreMap


@dataclass
class DtGradients:
    """Gradients of a scalar objective with respect to the filter inputs."""

    grad_x: np.ndarray  # (H, W, C), same shape as the filtered score map
    grad_g: np.ndarray  # (H, W), same shape as the edge map


def _scan_backward(
    x: np.ndarray, w: np.ndarray, direction: str, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of `_scan` for one pass over a (lines, N, channels) stack.

    Replays the pass output from the stored input, then walks positions in
    reverse generation order: the gradient flowing into y_j splits into a
    direct part (1 - w) toward x_j, a recurrent part w toward the previous
    output, and (y_prev - x_j) toward the pair's weight.  Returns the
    gradient for the pass input and the per-position weight gradient summed
    over channels.
    """
    y = _scan(x, w, direction)
    gy = np.array(grad_y, dtype=np.float64, order="C", copy=True)
    gx = np.empty_like(gy)
    gw = np.zeros(w.shape, dtype=np.float64)
    n = x.shape[1]
    if n == 1:
        gx[...] = gy
        return gx, gw
    if direction == "forward":
        for j in range(n - 1, 0, -1):
            gyj = gy[:, j, :]
            np.multiply(w[:, j, None], gyj, out=gx[:, j, :])
            gw[:, j] += ((y[:, j - 1, :] - x[:, j, :]) * gyj).sum(axis=1)
            gy[:, j - 1, :] += gx[:, j, :]
            np.subtract(gyj, gx[:, j, :], out=gx[:, j, :])
        gx[:, 0, :] = gy[:, 0, :]
    else:
        for j in range(0, n - 1):
            gyj = gy[:, j, :]
            np.multiply(w[:, j + 1, None], gyj, out=gx[:, j, :])
            gw[:, j + 1] += ((y[:, j + 1, :] - x[:, j, :]) * gyj).sum(axis=1)
            gy[:, j + 1, :] += gx[:, j, :]
            np.subtract(gyj, gx[:, j, :], out=gx[:, j, :])
        gx[:, n - 1, :] = gy[:, n - 1, :]
    return gx, gw


def backward_1d_pass(
    x: np.ndarray, w: np.ndarray, direction: str, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of `filter_1d_pass`: gradients for the signal and the weights."""
    if direction not in ("forward", "backward"):
        raise InvalidParameterError(f"direction must be 'forward' or 'backward', got {direction!r}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    grad_y = np.ascontiguousarray(grad_y, dtype=np.float64)
    if not (x.ndim == w.ndim == grad_y.ndim == 1 and x.shape == w.shape == grad_y.shape):
        raise ShapeMismatchError(
            "signal, weights, and upstream gradient must be equal-length 1-D arrays, "
            f"got {x.shape}, {w.shape}, {grad_y.shape}"
        )
    gx, gw = _scan_backward(x[None, :, None], w[None, :], direction, grad_y[None, :, None])
    return gx[0, :, 0], gw[0, :]


def backward_2d(tape: DtTape, grad_y: np.ndarray) -> DtGradients:
    """Reverse sweep over a recorded forward run.

    Walks the taped passes last-to-first, accumulating the weight gradient of
    each iteration across its four passes and all channels, then converts it
    to an edge gradient through the weight's dependence on the edge map
    (dw/dg = -(sqrt(2)/sigma_k) * (sigma_s/sigma_r) * w) and sums over
    iterations.
    """
    k_total = tape.params.iterations
    if len(tape.passes) != 4 * k_total or len(tape.weights) != k_total:
        raise TapeError(
            f"tape records {len(tape.passes)} passes and {len(tape.weights)} weight maps; "
            f"expected {4 * k_total} and {k_total}"
        )
    h, w_, c = tape.shape
    for rec in tape.passes:
        if rec.x.shape != (h, w_, c):
            raise TapeError(f"tape pass snapshot has shape {rec.x.shape}, expected {(h, w_, c)}")
    expected = [ad for _ in range(k_total) for ad in PASS_SEQUENCE]
    if [(rec.axis, rec.direction) for rec in tape.passes] != expected:
        raise TapeError("tape pass order does not match the forward pass sequence")
    gy = np.ascontiguousarray(grad_y, dtype=np.float64)
    if gy.shape != (h, w_, c):
        raise ShapeMismatchError(f"upstream gradient has shape {gy.shape}, expected {(h, w_, c)}")

    ratio = tape.params.sigma_s / tape.params.sigma_r
    grad_g = np.zeros((h, w_), dtype=np.float64)
    for k in range(k_total - 1, -1, -1):
        wk = tape.weights[k]
        gw_iter = np.zeros((h, w_), dtype=np.float64)
        for p in range(3, -1, -1):
            rec = tape.passes[4 * k + p]
            if rec.axis == "row":
                gy, gw = _scan_backward(rec.x, wk, rec.direction, gy)
                gw_iter += gw
            else:
                gy_t, gw_t = _scan_backward(
                    rec.x.transpose(1, 0, 2), wk.T, rec.direction, gy.transpose(1, 0, 2)
                )
                gy = gy_t.transpose(1, 0, 2)
                gw_iter += gw_t.T
        grad_g += (-SQRT2 / float(tape.sigmas[k]) * ratio) * wk * gw_iter
    return DtGradients(grad_x=np.ascontiguousarray(gy), grad_g=grad_g)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Relative disagreement |a - b| / max(1e-8, |a|, |b|) under the max-norm.

    The whole block is compared at once: central differences carry an
    irreducible rounding-noise floor of about ulp(loss) / (2 * step) per
    coordinate, so coordinates are meaningful only relative to the block's
    magnitude.  The 1e-8 floor keeps the ratio stable when both blocks vanish.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cannot compare shapes {a.shape} and {b.shape}")
    denom = max(1e-8, float(np.abs(a).max()), float(np.abs(b).max()))
    return float(np.abs(a - b).max() / denom)


def finite_difference_oracle(
    loss: Callable[[ScoreMap, EdgeMap], float],
    x: ScoreMap,
    g: EdgeMap,
    params: DtParams,
    step: float = 1e-6,
) -> DtGradients:
    """Central-difference gradients of a scalar loss over both filter inputs.

    The loss must be a pure function of (x, g); `params` documents the filter
    configuration the loss closes over and is not consumed here.  Every edge
    value must be at least `step` away from the g >= 0 domain boundary so the
    negative perturbation stays in-domain.
    """
    if not (isinstance(step, (int, float)) and np.isfinite(step) and step > 0):
        raise InvalidParameterError(f"step must be finite and > 0, got {step!r}")
    if (g.data < step).any():
        raise DomainViolationError(
            f"edge values must be >= step ({step!r}) so central differences stay in-domain; "
            f"min edge value is {g.data.min()!r}"
        )

    def sweep(base: np.ndarray, wrap, other) -> np.ndarray:
        grad = np.zeros_like(base)
        work = base.copy()
        flat = work.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss(*wrap(work, other))
            flat[i] = orig - step
            lo = loss(*wrap(work, other))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        return grad

    gx = sweep(x.data, lambda arr, o: (ScoreMap(arr), o), g)
    gg = sweep(g.data, lambda arr, o: (o, EdgeMap(arr)), x)
    return DtGradients(grad_x=gx, grad_g=gg)


def unrolled_reference_gradients(
    x: np.ndarray,
    w: np.ndarray,
    directions: Sequence[str],
    grad_y: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a chain of 1-D passes via a fully unrolled Jacobian.

    Forward-mode: every signal element carries its full Jacobian row with
    respect to (x, w), updated through each recurrence step.  O(N^2) per
    element, meant for short signals as an oracle independent of the reverse
    sweep.  Returns (grad_x, grad_w) for upstream gradient `grad_y`.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if not (x.ndim == w.ndim == grad_y.ndim == 1 and x.shape == w.shape == grad_y.shape):
        raise ShapeMismatchError(
            "signal, weights, and upstream gradient must be equal-length 1-D arrays, "
            f"got {x.shape}, {w.shape}, {grad_y.shape}"
        )
    n = x.size
    val = x.copy()
    jac = np.zeros((n, 2 * n), dtype=np.float64)
    jac[np.arange(n), np.arange(n)] = 1.0
    for direction in directions:
        if direction not in ("forward", "backward"):
            raise InvalidParameterError(
                f"direction must be 'forward' or 'backward', got {direction!r}"
            )
        nval = np.empty_like(val)
        njac = np.zeros_like(jac)
        if direction == "forward":
            nval[0] = val[0]
            njac[0] = jac[0]
            for i in range(1, n):
                nval[i] = val[i] + w[i] * (nval[i - 1] - val[i])
                njac[i] = jac[i] + w[i] * (njac[i - 1] - jac[i])
                njac[i, n + i] += nval[i - 1] - val[i]
        else:
            nval[n - 1] = val[n - 1]
            njac[n - 1] = jac[n - 1]
            for i in range(n - 2, -1, -1):
                nval[i] = val[i] + w[i + 1] * (nval[i + 1] - val[i])
                njac[i] = jac[i] + w[i + 1] * (njac[i + 1] - jac[i])
                njac[i, n + i + 1] += nval[i + 1] - val[i]
        val, jac = nval, njac
    grad_x = jac[:, :n].T @ grad_y
    grad_w = jac[:, n:].T @ grad_y
    return grad_x, grad_w


def gradient_check_suite(cases: int, seed: int) -> tuple[float, dict]:
    """Compare the reverse sweep against central differences on random cases.

    Each case filters a random score map (up to 8x8x3) under random edges in
    [0.1, 2] with sigma_s in {1, 3, 10}, sigma_r in {0.5, 1}, and 1-3
    iterations, using the summed-squares objective.  Returns the worst
    relative error over all cases and a description of the worst case.
    """
    if not (isinstance(cases, int) and cases >= 1):
        raise InvalidParameterError(f"cases must be an integer >= 1, got {cases!r}")
    rng = np.random.default_rng(seed)
    worst = -1.0
    worst_info: dict = {}
    for case in range(cases):
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        c = int(rng.integers(1, 4))
        params = DtParams(
            sigma_s=float(rng.choice([1.0, 3.0, 10.0])),
            sigma_r=float(rng.choice([0.5, 1.0])),
            iterations=int(rng.integers(1, 4)),
        )
        x = ScoreMap(rng.uniform(0.0, 1.0, (h, w, c)))
        g = EdgeMap(rng.uniform(0.1, 2.0, (h, w)))

        def loss(xm: ScoreMap, gm: EdgeMap) -> float:
            ym, _ = filter_2d(xm, gm, params)
            return float((ym.data * ym.data).sum())

        y, tape = filter_2d(x, g, params, record_tape=True)
        analytic = backward_2d(tape, 2.0 * y.data)
        numeric = finite_difference_oracle(loss, x, g, params, step=1e-6)
        err = max(
            relative_error(analytic.grad_x, numeric.grad_x),
            relative_error(analytic.grad_g, numeric.grad_g),
        )
        if err > worst:
            worst = err
            worst_info = {
                "case": case,
                "height": h,
                "width": w,
                "channels": c,
                "sigma_s": params.sigma_s,
                "sigma_r": params.sigma_r,
                "iterations": params.iterations,
            }
    return worst, worst_info
