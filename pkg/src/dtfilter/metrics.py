"""Segmentation quality metrics: mean IOU, boundary bands, trimap curves.

Classes absent from both prediction and ground truth have an undefined IOU
and are excluded from means; a fully undefined mean is reported as None and
rendered as "n/a" in CSV output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import InvalidParameterError, LabelError, ShapeMismatchError


@dataclass
class IouReport:
    """Per-class intersection-over-union and their mean over defined classes."""

    per_class_iou: list[float | None]
    mean_iou: float | None


@dataclass
class TrimapCurve:
    """Mean IOU restricted to boundary bands of increasing width."""

    widths: list[float]
    miou: list[float | None]


def _check_labels(arr, classes: int, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if not np.issubdtype(out.dtype, np.integer):
        raise LabelError(f"{name} must hold integer labels, got dtype {out.dtype}")
    if out.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {out.shape}")
    if out.size and (out.min() < 0 or out.max() >= classes):
        raise LabelError(
            f"{name} labels must lie in [0, {classes}), got range "
            f"[{out.min()}, {out.max()}]"
        )
    return out


def mean_iou(pred, gt, classes: int) -> IouReport:
    """Per-class and mean IOU between two label maps."""
    if not (isinstance(classes, int) and classes >= 1):
        raise InvalidParameterError(f"classes must be an integer >= 1, got {classes!r}")
    pred = _check_labels(pred, classes, "pred")
    gt = _check_labels(gt, classes, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    return _masked_iou(pred, gt, classes, np.ones(pred.shape, dtype=bool))


def _masked_iou(pred: np.ndarray, gt: np.ndarray, classes: int, mask: np.ndarray) -> IouReport:
    per_class: list[float | None] = []
    for c in range(classes):
        p = (pred == c) & mask
        g = (gt == c) & mask
        union = int((p | g).sum())
        if union == 0:
            per_class.append(None)
        else:
            per_class.append(int((p & g).sum()) / union)
    defined = [v for v in per_class if v is not None]
    mean = sum(defined) / len(defined) if defined else None
    return IouReport(per_class_iou=per_class, mean_iou=mean)


def boundary_band(gt, width: float) -> np.ndarray:
    """Boolean mask of pixels within Euclidean distance `width` of a gt boundary.

    Boundary pixels are those with a 4-neighbor of a different label, so both
    sides of every label change count.  The radius is inclusive.  A uniform
    map has no boundary and yields an all-False band.
    """
    if not (isinstance(width, (int, float)) and np.isfinite(width) and width >= 0):
        raise InvalidParameterError(f"width must be finite and >= 0, got {width!r}")
    gt = np.asarray(gt)
    if gt.ndim != 2:
        raise ShapeMismatchError(f"gt must be 2-D, got shape {gt.shape}")
    boundary = np.zeros(gt.shape, dtype=bool)
    horiz = gt[:, 1:] != gt[:, :-1]
    boundary[:, 1:] |= horiz
    boundary[:, :-1] |= horiz
    vert = gt[1:, :] != gt[:-1, :]
    boundary[1:, :] |= vert
    boundary[:-1, :] |= vert
    if not boundary.any():
        return boundary
    dist = distance_transform_edt(~boundary)
    return dist <= width


def trimap_curve(pred, gt, classes: int, widths) -> TrimapCurve:
    """Mean IOU inside boundary bands for a strictly increasing width list."""
    if not (isinstance(classes, int) and classes >= 1):
        raise InvalidParameterError(f"classes must be an integer >= 1, got {classes!r}")
    widths = [float(w) for w in widths]
    if not widths:
        raise InvalidParameterError("widths must be nonempty")
    if any(b <= a for a, b in zip(widths, widths[1:])):
        raise InvalidParameterError(f"widths must be strictly increasing, got {widths}")
    pred = _check_labels(pred, classes, "pred")
    gt = _check_labels(gt, classes, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    miou = [
        _masked_iou(pred, gt, classes, boundary_band(gt, w)).mean_iou for w in widths
    ]
    return TrimapCurve(widths=widths, miou=miou)


def _csv_value(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.17g}"


def iou_report_csv(report: IouReport) -> str:
    """CSV rendering: one `class,iou` row per class, then a `mean,` row."""
    lines = ["class,iou"]
    lines += [f"{c},{_csv_value(v)}" for c, v in enumerate(report.per_class_iou)]
    lines.append(f"mean,{_csv_value(report.mean_iou)}")
    return "\n".join(lines) + "\n"


def trimap_csv(curve: TrimapCurve) -> str:
    """CSV rendering with one `width,miou` row per band width."""
    lines = ["width,miou"]
    lines += [f"{w:g},{_csv_value(m)}" for w, m in zip(curve.widths, curve.miou)]
    return "\n".join(lines) + "\n"
