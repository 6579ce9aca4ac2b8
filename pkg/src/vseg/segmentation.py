"""Mask discretization and evaluation metrics.

Soft masks are binarized by exact two-class 1-D K-means (an exhaustive scan
over the sorted values, globally optimal and deterministic). Evaluation
reports region overlap (Jaccard) and contour quality (boundary precision /
recall / F) under a pixel tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class MetricReport:
    jaccard: float
    contour_f: float
    contour_precision: float
    contour_recall: float
    boundary_tolerance: float


def binarize(soft: np.ndarray) -> np.ndarray:
    """Split soft values into a binary mask by optimal 1-D two-means.

    The within-cluster sum of squares is minimized over all thresholds that
    fall between consecutive sorted values; the cluster with the higher mean
    becomes foreground. Degenerate input (all values identical) yields an
    all-background mask with a warning.

    The foreground set depends only on the ordering of the values, so any
    strictly increasing rescaling leaves it unchanged.
    """
    soft = np.asarray(soft, dtype=np.float64)
    shape = soft.shape
    x = np.sort(soft.ravel())
    n = x.size
    if n < 2 or x[0] == x[-1]:
        warnings.warn("binarize: constant soft mask, returning all background")
        return np.zeros(shape, dtype=np.uint8)

    # SSE of each split k (left = x[:k], right = x[k:]) from prefix sums:
    # sum((x - mean)^2) = sum(x^2) - sum(x)^2 / n
    cs = np.concatenate(([0.0], np.cumsum(x)))
    cs2 = np.concatenate(([0.0], np.cumsum(x * x)))
    k = np.arange(1, n)
    left = cs2[k] - cs[k] ** 2 / k
    right = (cs2[n] - cs2[k]) - (cs[n] - cs[k]) ** 2 / (n - k)
    sse = left + right
    # only splits between distinct values are meaningful
    valid = x[1:] != x[:-1]
    sse[~valid] = np.inf
    kbest = int(k[np.argmin(sse)])
    thr = 0.5 * (x[kbest - 1] + x[kbest])
    # right cluster has the higher mean by construction of the sort
    return (soft > thr).astype(np.uint8)


def jaccard(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection-over-union of the foreground; 1.0 when both are empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = pred > 0
    g = gt > 0
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(p & g) / union)


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 8-neighbor (image border counts)."""
    fg = mask > 0
    if not fg.any():
        return np.zeros_like(fg)
    eroded = ndimage.binary_erosion(
        fg, structure=np.ones((3, 3), bool), border_value=0
    )
    return fg & ~eroded


def _disk(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= radius * radius


def default_boundary_tolerance(shape) -> int:
    """DAVIS-style tolerance: ceil(0.0075 * image diagonal) in pixels."""
    h, w = shape[:2]
    return int(np.ceil(0.0075 * np.sqrt(h * h + w * w)))


def contour_f(pred: np.ndarray, gt: np.ndarray, tolerance=None) -> MetricReport:
    """Boundary precision/recall/F under a Euclidean pixel tolerance.

    A predicted boundary pixel counts as matched when a ground-truth boundary
    pixel lies within ``tolerance`` (via dilation with a disk), and
    symmetrically for recall. ``contour_f(a, b).contour_precision`` equals
    ``contour_f(b, a).contour_recall`` by construction.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if tolerance is None:
        tolerance = default_boundary_tolerance(pred.shape)

    pb = _boundary(pred)
    gb = _boundary(gt)
    n_pb = int(pb.sum())
    n_gb = int(gb.sum())
    if n_pb == 0 and n_gb == 0:
        pc = rc = f = 1.0
    elif n_pb == 0 or n_gb == 0:
        pc = rc = f = 0.0
    else:
        disk = _disk(float(tolerance))
        gb_wide = ndimage.binary_dilation(gb, structure=disk)
        pb_wide = ndimage.binary_dilation(pb, structure=disk)
        pc = float((pb & gb_wide).sum() / n_pb)
        rc = float((gb & pb_wide).sum() / n_gb)
        f = 2 * pc * rc / (pc + rc) if pc + rc > 0 else 0.0
    return MetricReport(
        jaccard=jaccard(pred, gt),
        contour_f=f,
        contour_precision=pc,
        contour_recall=rc,
        boundary_tolerance=float(tolerance),
    )


def upsample_nearest(mask: np.ndarray, shape) -> np.ndarray:
    """Nearest-neighbor resize of a binary mask to ``shape`` (H, W)."""
    mask = np.asarray(mask)
    h, w = mask.shape
    H, W = shape
    rows = np.minimum((np.arange(H) + 0.5) * h / H, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(W) + 0.5) * w / W, w - 1).astype(np.intp)
    return mask[rows[:, None], cols[None, :]]
