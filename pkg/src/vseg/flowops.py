"""Sparse forward-warping operators built from optical flow, plus the
photometric flow-reliability mask.

A flow field sends the content of source cell i to cell j = i + round(flow_i)
(round half away from zero, fixed for cross-platform determinism). The warp
operator scatters a mask along that map; targets hit by several sources
average their contributors so warped values stay in (0, 1), and targets hit
by none are flagged invalid and set to the neutral value 0.5.

Flow channel order everywhere: ``flow[..., 0] = dx`` (columns),
``flow[..., 1] = dy`` (rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEUTRAL_VALUE = 0.5


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero (3.5 -> 4, -0.5 -> -1)."""
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass
class WarpOperator:
    """Source -> target scatter map for one flow field.

    src_idx / tgt_idx list the surviving (in-grid, reliable) source cells and
    their targets as flat indices; contributor_count and valid are per-target.
    Immutable after construction; safe to share across threads.
    """

    shape: tuple
    src_idx: np.ndarray
    tgt_idx: np.ndarray
    contributor_count: np.ndarray
    valid: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.shape[0] * self.shape[1])


def build_warp(flow: np.ndarray, reliability: np.ndarray | None = None) -> WarpOperator:
    """Build the scatter operator for one [H, W, 2] flow field.

    Sources whose target lands outside the grid are dropped, as are sources
    flagged unreliable (their flow vectors are excluded from the optimization
    entirely). Contributor counts and per-target validity follow.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be [H, W, 2], got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    h, w = flow.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    tr = rows + round_half_away(flow[:, :, 1]).astype(np.int64)
    tc = cols + round_half_away(flow[:, :, 0]).astype(np.int64)
    keep = (tr >= 0) & (tr < h) & (tc >= 0) & (tc < w)
    if reliability is not None:
        rel = np.asarray(reliability).reshape(h, w)
        keep &= rel > 0
    src_idx = np.flatnonzero(keep.ravel())
    tgt_idx = (tr.ravel()[src_idx] * w + tc.ravel()[src_idx]).astype(np.int64)
    counts = np.bincount(tgt_idx, minlength=h * w).astype(np.int64)
    return WarpOperator(
        shape=(h, w),
        src_idx=src_idx,
        tgt_idx=tgt_idx,
        contributor_count=counts,
        valid=counts > 0,
    )


def apply_warp(op: WarpOperator, mask: np.ndarray):
    """Transport a flat soft mask along the warp.

    Each valid target receives the mean of its contributors (linear in the
    mask); invalid targets get NEUTRAL_VALUE. Returns (warped, valid).
    """
    mask = np.asarray(mask, dtype=np.float64).ravel()
    if mask.size != op.n_cells:
        raise ValueError(f"mask has {mask.size} cells, warp expects {op.n_cells}")
    acc = np.bincount(op.tgt_idx, weights=mask[op.src_idx], minlength=op.n_cells)
    warped = np.full(op.n_cells, NEUTRAL_VALUE)
    np.divide(acc, op.contributor_count, out=warped, where=op.valid)
    return warped, op.valid.copy()


def apply_warp_adjoint(op: WarpOperator, grad: np.ndarray) -> np.ndarray:
    """Adjoint of apply_warp restricted to valid targets.

    With W m = C^-1 F m on valid targets, the adjoint gathers each target's
    (count-normalized) gradient back to its sources: (W^T g)_i = g_j / c_j.
    """
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.size != op.n_cells:
        raise ValueError(f"gradient has {grad.size} cells, warp expects {op.n_cells}")
    out = np.zeros(op.n_cells)
    out[op.src_idx] = grad[op.tgt_idx] / op.contributor_count[op.tgt_idx]
    return out


def bilinear_sample(image: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Sample image[y, x, :] bilinearly; coordinates clamped to the border."""
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[:, :, None]
    h, w = image.shape[:2]
    y = np.clip(y, 0.0, h - 1.0)
    x = np.clip(x, 0.0, w - 1.0)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (y - y0)[..., None]
    fx = (x - x0)[..., None]
    out = (
        image[y0, x0] * (1 - fy) * (1 - fx)
        + image[y0, x1] * (1 - fy) * fx
        + image[y1, x0] * fy * (1 - fx)
        + image[y1, x1] * fy * fx
    )
    return out[..., 0] if squeeze else out


def flow_reliability(
    frame_p: np.ndarray,
    frame_q: np.ndarray,
    flow_pq: np.ndarray,
    k: float = 90.0,
) -> np.ndarray:
    """Photometric check of a flow field; 1 = reliable at that location.

    Frame q is warped back to frame p by sampling it at i + flow(i); locations
    whose per-channel mean absolute reconstruction error exceeds the k-th
    percentile are flagged unreliable.
    """
    frame_p = np.asarray(frame_p, dtype=np.float64)
    frame_q = np.asarray(frame_q, dtype=np.float64)
    flow_pq = np.asarray(flow_pq, dtype=np.float64)
    if frame_p.ndim == 2:
        frame_p = frame_p[:, :, None]
    if frame_q.ndim == 2:
        frame_q = frame_q[:, :, None]
    if frame_p.shape != frame_q.shape:
        raise ValueError(f"frame shapes differ: {frame_p.shape} vs {frame_q.shape}")
    if flow_pq.shape[:2] != frame_p.shape[:2] or flow_pq.shape[2] != 2:
        raise ValueError(
            f"flow shape {flow_pq.shape} does not match frames {frame_p.shape[:2]}"
        )
    h, w = frame_p.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    recon = bilinear_sample(frame_q, rows + flow_pq[:, :, 1], cols + flow_pq[:, :, 0])
    err = np.abs(frame_p - recon).mean(axis=2)
    tau = np.percentile(err, k)
    return (err <= tau).astype(np.uint8)


def compose_flow(flow_ab: np.ndarray, flow_bc: np.ndarray) -> np.ndarray:
    """Chain two flow fields: phi_{a->c}(i) = phi_{a->b}(i) + phi_{b->c}(i + phi_{a->b}(i))."""
    flow_ab = np.asarray(flow_ab, dtype=np.float64)
    flow_bc = np.asarray(flow_bc, dtype=np.float64)
    if flow_ab.shape != flow_bc.shape:
        raise ValueError(f"flow shapes differ: {flow_ab.shape} vs {flow_bc.shape}")
    h, w = flow_ab.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    hop = bilinear_sample(flow_bc, rows + flow_ab[:, :, 1], cols + flow_ab[:, :, 0])
    return (flow_ab + hop).astype(np.float32)


def build_horizon_warps(
    flow_fwd,
    flow_bwd,
    horizon: int = 1,
    reliability_fwd=None,
    reliability_bwd=None,
):
    """Warp operators for every frame pair up to ``horizon`` steps apart.

    Returns (warps_fwd, warps_bwd) with warps_fwd[t-1][p] transporting frame p
    to frame p+t and warps_bwd[t-1][p] transporting frame p+t back to p.
    Distance-t flows for t > 1 are chained from the adjacent fields; a chained
    flow inherits the reliability of its first hop (which shares its grid).
    """
    n_frames = len(flow_fwd) + 1
    warps_fwd, warps_bwd = [], []
    cur_f = [np.asarray(f, dtype=np.float64) for f in flow_fwd]
    cur_b = [np.asarray(f, dtype=np.float64) for f in flow_bwd]
    for t in range(1, horizon + 1):
        if t > 1:
            cur_f = [
                compose_flow(flow_fwd[p], cur_f[p + 1]) for p in range(n_frames - t)
            ]
            cur_b = [
                compose_flow(flow_bwd[p + t - 1], cur_b[p])
                for p in range(n_frames - t)
            ]
        row_f, row_b = [], []
        for p in range(max(n_frames - t, 0)):
            rf = None if reliability_fwd is None else reliability_fwd[p]
            rb = None if reliability_bwd is None else reliability_bwd[p + t - 1]
            row_f.append(build_warp(cur_f[p], rf))
            row_b.append(build_warp(cur_b[p], rb))
        warps_fwd.append(row_f)
        warps_bwd.append(row_b)
    return warps_fwd, warps_bwd


def resample_flow(flow: np.ndarray, shape) -> np.ndarray:
    """Bilinearly resample a flow field onto an (H, W) grid, rescaling the
    displacement vectors to the new grid's pixel units."""
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    H, W = shape
    if (H, W) == (h, w):
        return flow.astype(np.float32)
    ys = (np.arange(H) + 0.5) * h / H - 0.5
    xs = (np.arange(W) + 0.5) * w / W - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = bilinear_sample(flow, grid_y, grid_x)
    out[:, :, 0] *= W / w
    out[:, :, 1] *= H / h
    return out.astype(np.float32)
