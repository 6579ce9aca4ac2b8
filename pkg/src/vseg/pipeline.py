"""End-to-end segmentation pipeline as a scikit-learn style estimator.

``VideoObjectSegmenter`` is transductive, like the clustering estimators:
``fit`` consumes one ``VideoBundle`` and computes soft masks for exactly that
video (exposed via trailing-underscore attributes), ``predict`` binarizes
them, and ``get_params``/``set_params``/``clone`` work as usual so the
segmenter composes with the wider scikit-learn ecosystem.

Stages: per-frame affinity + second eigenvector (the initial soft masks),
photometric flow-reliability filtering, warp-operator construction, and joint
refinement of all masks under the flow-consistency objective.
"""

from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .affinity import AffinityConfig, frame_affinity, second_eigenvector
from .flowops import build_horizon_warps, flow_reliability, resample_flow
from .objective import ObjectiveConfig, SoftMask, normalize_init, refine_masks
from .segmentation import binarize, upsample_nearest
from .tensorio import VideoBundle


def check_bundle(bundle) -> VideoBundle:
    """Validate pipeline input (shape consistency across frames)."""
    if not isinstance(bundle, VideoBundle):
        raise TypeError(f"expected a VideoBundle, got {type(bundle).__name__}")
    bundle.validate()
    return bundle


def _resize_image(img, shape):
    from .objective import _bilinear_resize

    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[:2] == tuple(shape):
        return img
    return np.stack(
        [_bilinear_resize(img[:, :, c], shape) for c in range(img.shape[2])], axis=2
    )


class VideoObjectSegmenter(BaseEstimator):
    """Segment the main salient object of a video from features and flow.

    Parameters
    ----------
    alpha_psi, alpha_phi : float
        Relative weights of appearance and flow similarity in the per-frame
        affinity.
    threshold_s : float
        Strictly positive affinity floor; normalized similarities below it
        are zeroed.
    anchor_weight : float
        Weight of the stay-near-initialization term of the refinement
        objective (CLI flag ``--lambda``).
    horizon : int
        Furthest frame distance tied together by flow-consistency terms.
    max_iters : int
        Outer quasi-Newton iterations of the refinement.
    lbfgs_history : int
        Quasi-Newton memory length.
    step_size : float
        Initial (pre-backtracking) line-search step.
    percentile : float
        Flow-reliability percentile k; locations whose photometric
        reconstruction error exceeds the k-th percentile are excluded.
        Requires frames in the bundle; 100 keeps every location.
    pic_tol, pic_max_iters : float, int
        Power-iteration stopping rule for the eigenvector extraction.
    border_width : int
        Width of the border ring used to orient eigenvector signs.
    resolution : {"flow", "feature"}
        Grid the refinement runs on; initial eigenvectors are bilinearly
        upsampled to it.
    loss : {"ce", "dot"}
        Deviation measure of the objective ("dot" exists for ablation tests).
    seed : int
        Seed of the power-iteration start vector (the only randomness).
    """

    def __init__(
        self,
        alpha_psi: float = 1.0,
        alpha_phi: float = 1.0,
        threshold_s: float = 0.1,
        anchor_weight: float = 10.0,
        horizon: int = 1,
        max_iters: int = 5,
        lbfgs_history: int = 10,
        step_size: float = 1.0,
        percentile: float = 90.0,
        pic_tol: float = 1e-6,
        pic_max_iters: int = 1000,
        border_width: int = 1,
        resolution: str = "flow",
        loss: str = "ce",
        seed: int = 0,
    ):
        self.alpha_psi = alpha_psi
        self.alpha_phi = alpha_phi
        self.threshold_s = threshold_s
        self.anchor_weight = anchor_weight
        self.horizon = horizon
        self.max_iters = max_iters
        self.lbfgs_history = lbfgs_history
        self.step_size = step_size
        self.percentile = percentile
        self.pic_tol = pic_tol
        self.pic_max_iters = pic_max_iters
        self.border_width = border_width
        self.resolution = resolution
        self.loss = loss
        self.seed = seed

    def _affinity_config(self) -> AffinityConfig:
        return AffinityConfig(
            alpha_psi=self.alpha_psi,
            alpha_phi=self.alpha_phi,
            threshold_s=self.threshold_s,
            pic_tol=self.pic_tol,
            pic_max_iters=self.pic_max_iters,
            seed=self.seed,
        )

    def _objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            anchor_weight=self.anchor_weight,
            horizon=self.horizon,
            max_outer_iters=self.max_iters,
            lbfgs_history=self.lbfgs_history,
            step_size=self.step_size,
            loss=self.loss,
        )

    def fit(self, X, y=None):
        """Run the full pipeline on one VideoBundle."""
        bundle = check_bundle(X)
        if self.resolution not in ("flow", "feature"):
            raise ValueError(f"unknown resolution policy {self.resolution!r}")
        acfg = self._affinity_config()
        ocfg = self._objective_config()
        n = bundle.n_frames
        hf, wf, _ = bundle.feature_shape
        flow_shape = bundle.flow_shape
        opt_shape = flow_shape if self.resolution == "flow" else (hf, wf)

        # photometric reliability per flow field (needs frames)
        rel_fwd = rel_bwd = None
        if bundle.frames is not None and bundle.flow_fwd and self.percentile < 100:
            frames = [_resize_image(f, flow_shape) for f in bundle.frames]
            rel_fwd, rel_bwd = [], []
            for p in range(n - 1):
                rel_fwd.append(
                    flow_reliability(
                        frames[p], frames[p + 1], bundle.flow_fwd[p], self.percentile
                    )
                )
                rel_bwd.append(
                    flow_reliability(
                        frames[p + 1], frames[p], bundle.flow_bwd[p], self.percentile
                    )
                )

        t0 = time.perf_counter()
        init_eigen = []
        init_masks = []
        # one scratch buffer for all frames; each frame's affinity is consumed
        # (eigenvector extracted) before the next frame overwrites it
        scratch = np.empty((hf * wf, hf * wf))
        for p in range(n):
            fwd = bundle.flow_fwd[p] if p < n - 1 and bundle.flow_fwd else None
            bwd = bundle.flow_bwd[p - 1] if p > 0 and bundle.flow_bwd else None
            rel = None
            if rel_fwd is not None:
                parts = []
                if p < n - 1:
                    parts.append(rel_fwd[p])
                if p > 0:
                    parts.append(rel_bwd[p - 1])
                if parts:
                    rel = np.minimum.reduce(parts)
                    rel = upsample_nearest(rel, (hf, wf))
            if fwd is not None and fwd.shape[:2] != (hf, wf):
                fwd = resample_flow(fwd, (hf, wf))
            if bwd is not None and bwd.shape[:2] != (hf, wf):
                bwd = resample_flow(bwd, (hf, wf))
            aff = frame_affinity(bundle.features[p], fwd, bwd, rel, acfg, out=scratch)
            eig = second_eigenvector(aff, acfg)
            init_eigen.append(eig)
            if np.isinf(eig.residual):
                # no second mode in this frame (single cluster): a flat mask
                # keeps the refinement well-posed and binarizes to background
                init_masks.append(
                    SoftMask.from_values(np.full(opt_shape, 0.5), opt_shape)
                )
            else:
                init_masks.append(
                    normalize_init(
                        eig,
                        (hf, wf),
                        border_width=self.border_width,
                        target_shape=opt_shape,
                    )
                )
        t_init = time.perf_counter() - t0

        t0 = time.perf_counter()
        if n > 1 and bundle.flow_fwd:
            flows_f = bundle.flow_fwd
            flows_b = bundle.flow_bwd
            if opt_shape != flow_shape:
                flows_f = [resample_flow(f, opt_shape) for f in flows_f]
                flows_b = [resample_flow(f, opt_shape) for f in flows_b]
                if rel_fwd is not None:
                    rel_fwd = [upsample_nearest(r, opt_shape) for r in rel_fwd]
                    rel_bwd = [upsample_nearest(r, opt_shape) for r in rel_bwd]
            warps_fwd, warps_bwd = build_horizon_warps(
                flows_f, flows_b, self.horizon, rel_fwd, rel_bwd
            )
        else:
            warps_fwd = [[] for _ in range(self.horizon)]
            warps_bwd = [[] for _ in range(self.horizon)]
        refinement = refine_masks(init_masks, warps_fwd, warps_bwd, ocfg)
        t_opt = time.perf_counter() - t0

        self.n_frames_ = n
        self.opt_shape_ = tuple(opt_shape)
        self.init_eigen_ = init_eigen
        self.init_masks_ = init_masks
        self.soft_masks_ = refinement.masks
        self.refinement_ = refinement
        self.reliability_fwd_ = rel_fwd
        self.reliability_bwd_ = rel_bwd
        self.timings_ = {
            "init_s_per_frame": t_init / n,
            "optimize_s_per_frame": t_opt / n,
            "init_s": t_init,
            "optimize_s": t_opt,
        }
        return self

    def _require_fitted(self):
        if not hasattr(self, "soft_masks_"):
            raise NotFittedError(
                "this VideoObjectSegmenter is not fitted yet; call fit first"
            )

    def predict(self, X=None):
        """Binary masks (list of [H, W] uint8 arrays) of the fitted video."""
        self._require_fitted()
        return [binarize(m.values.reshape(m.shape)) for m in self.soft_masks_]

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def score(self, X=None, y=None):
        """Mean Jaccard of the fitted masks against ground truth ``y``
        (defaults to the gt carried by ``X`` when it is a VideoBundle)."""
        from .segmentation import jaccard

        self._require_fitted()
        gt = y
        if gt is None and isinstance(X, VideoBundle):
            gt = X.gt_masks
        if gt is None:
            raise ValueError("no ground-truth masks available to score against")
        preds = self.predict()
        vals = []
        for pred, g in zip(preds, gt):
            g = np.asarray(g)
            if pred.shape != g.shape:
                pred = upsample_nearest(pred, g.shape)
            vals.append(jaccard(pred, g))
        return float(np.mean(vals))
