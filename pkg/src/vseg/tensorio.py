"""Binary tensor container (VSEG1) and PGM mask I/O.

Every array the engine consumes (features, flows, frames, soft masks) travels
in one container format so a single loader covers all inputs:

    bytes 0-4   ASCII magic ``VSEG1``
    u32 LE      ndim
    ndim x u32  dims
    payload     prod(dims) float32 LE, row-major

Binary masks are written as 8-bit binary PGM (P5, maxval 255) with
foreground = 255. Ground-truth masks load from either format and are
thresholded at 0.5.

Flow tensors use channel order ``[..., 0] = dx`` (columns) and
``[..., 1] = dy`` (rows).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAGIC = b"VSEG1"


class TensorFormatError(ValueError):
    """Raised when a file is not a well-formed VSEG1/PGM tensor."""


def read_tensor(path) -> np.ndarray:
    """Load a VSEG1 file into a float32 array.

    Rejects truncated or oversized payloads and any non-finite value; the
    error message names the first offending flat index.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic, not a VSEG1 file")
    off = len(MAGIC)
    ndim = int(np.frombuffer(raw, dtype="<u4", count=1, offset=off)[0])
    off += 4
    if ndim < 1 or ndim > 32:
        raise TensorFormatError(f"{path}: implausible ndim {ndim}")
    if len(raw) < off + 4 * ndim:
        raise TensorFormatError(f"{path}: header truncated")
    dims = np.frombuffer(raw, dtype="<u4", count=ndim, offset=off).astype(np.int64)
    off += 4 * ndim
    if np.any(dims <= 0):
        raise TensorFormatError(f"{path}: non-positive dimension in {dims.tolist()}")
    n = int(np.prod(dims))
    if len(raw) - off != 4 * n:
        raise TensorFormatError(
            f"{path}: payload length mismatch "
            f"(expected {4 * n} bytes for shape {dims.tolist()}, got {len(raw) - off})"
        )
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
    finite = np.isfinite(data)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise TensorFormatError(
            f"{path}: non-finite value {data[bad]!r} at flat index {bad}"
        )
    return data.reshape(dims).astype(np.float32, copy=True)


def write_tensor(path, t: np.ndarray) -> None:
    """Write ``t`` as VSEG1; ``read_tensor`` recovers it bit-exactly."""
    t = np.ascontiguousarray(t, dtype=np.float32)
    if t.ndim == 0:
        t = t.reshape(1)
    header = MAGIC + np.uint32(t.ndim).tobytes()
    header += np.asarray(t.shape, dtype="<u4").tobytes()
    Path(path).write_bytes(header + t.astype("<f4", copy=False).tobytes())


def write_mask_image(path, mask: np.ndarray) -> None:
    """Write a binary [H, W] mask as PGM P5 with foreground = 255."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise TensorFormatError(f"mask must be 2-D, got shape {mask.shape}")
    vals = np.unique(mask)
    if not np.all(np.isin(vals, (0, 1))):
        raise TensorFormatError("mask values must be in {0, 1}")
    h, w = mask.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())


def read_mask_image(path) -> np.ndarray:
    """Read a binary PGM (P5) mask; values > maxval/2 become foreground."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise TensorFormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(m.group(i)) for i in (1, 2, 3))
    if maxval <= 0 or maxval > 255:
        raise TensorFormatError(f"{path}: unsupported PGM maxval {maxval}")
    body = raw[m.end():]
    if len(body) < w * h:
        raise TensorFormatError(f"{path}: PGM payload truncated")
    pix = np.frombuffer(body, dtype=np.uint8, count=w * h).reshape(h, w)
    return (pix.astype(np.float32) / maxval > 0.5).astype(np.uint8)


def read_gt_mask(path) -> np.ndarray:
    """Ground-truth mask from VSEG1 or PGM, thresholded at 0.5."""
    path = Path(path)
    if path.suffix == ".pgm":
        return read_mask_image(path)
    t = read_tensor(path)
    if t.ndim == 3 and t.shape[2] == 1:
        t = t[:, :, 0]
    if t.ndim != 2:
        raise TensorFormatError(f"{path}: ground-truth mask must be 2-D")
    return (t > 0.5).astype(np.uint8)


@dataclass
class VideoBundle:
    """Aligned per-frame inputs for one video.

    features:  N arrays [H_f, W_f, d]
    flow_fwd:  N-1 arrays [H, W, 2], pair (p, p+1) at index p
    flow_bwd:  N-1 arrays [H, W, 2], pair (p+1, p) at index p
    frames:    optional N arrays [H_img, W_img, c] (used for flow reliability)
    gt_masks:  optional N binary arrays
    """

    features: Sequence[np.ndarray]
    flow_fwd: Sequence[np.ndarray] = field(default_factory=list)
    flow_bwd: Sequence[np.ndarray] = field(default_factory=list)
    frames: Optional[Sequence[np.ndarray]] = None
    gt_masks: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        self.validate()

    @property
    def n_frames(self) -> int:
        return len(self.features)

    @property
    def feature_shape(self):
        return self.features[0].shape

    @property
    def flow_shape(self):
        if self.flow_fwd:
            return self.flow_fwd[0].shape[:2]
        return self.features[0].shape[:2]

    def validate(self) -> None:
        n = len(self.features)
        if n == 0:
            raise ValueError("bundle has no frames")
        fs = self.features[0].shape
        if len(fs) != 3:
            raise ValueError(f"features must be [H_f, W_f, d], got {fs}")
        for p, f in enumerate(self.features):
            if f.shape != fs:
                raise ValueError(f"feature tensor {p} has shape {f.shape}, expected {fs}")
        if len(self.flow_fwd) != len(self.flow_bwd):
            raise ValueError(
                f"{len(self.flow_fwd)} forward vs {len(self.flow_bwd)} backward flows"
            )
        if self.flow_fwd and len(self.flow_fwd) != n - 1:
            raise ValueError(f"expected {n - 1} flow pairs, got {len(self.flow_fwd)}")
        if self.flow_fwd:
            gs = self.flow_fwd[0].shape
            if len(gs) != 3 or gs[2] != 2:
                raise ValueError(f"flows must be [H, W, 2], got {gs}")
            for p, (ff, fb) in enumerate(zip(self.flow_fwd, self.flow_bwd)):
                if ff.shape != gs or fb.shape != gs:
                    raise ValueError(f"flow pair {p} shape mismatch")
        if self.frames is not None and len(self.frames) != n:
            raise ValueError(f"expected {n} frames, got {len(self.frames)}")
        if self.gt_masks is not None and len(self.gt_masks) != n:
            raise ValueError(f"expected {n} ground-truth masks, got {len(self.gt_masks)}")


def _indexed(directory: Path, pattern: str) -> list[Path]:
    out = []
    for i in range(100000):
        p = directory / (pattern % i)
        if not p.exists():
            break
        out.append(p)
    return out


def load_bundle(
    features_dir,
    flows_dir=None,
    frames_dir=None,
    gt_dir=None,
) -> VideoBundle:
    """Assemble a VideoBundle from directories of VSEG1/PGM files.

    Naming: ``feat_%05d.vseg``, ``flow_fwd_%05d.vseg`` / ``flow_bwd_%05d.vseg``
    (pair (p, p+1) at index p), ``frame_%05d.vseg``, ``gt_%05d.vseg|pgm``,
    all indexed from 0.
    """
    features_dir = Path(features_dir)
    if not features_dir.is_dir():
        raise FileNotFoundError(f"missing input: features directory {features_dir}")
    feat_paths = _indexed(features_dir, "feat_%05d.vseg")
    if not feat_paths:
        raise FileNotFoundError(f"missing input: no feat_*.vseg in {features_dir}")
    features = [read_tensor(p) for p in feat_paths]
    n = len(features)

    flow_fwd, flow_bwd = [], []
    if flows_dir is not None:
        flows_dir = Path(flows_dir)
        if not flows_dir.is_dir():
            raise FileNotFoundError(f"missing input: flows directory {flows_dir}")
        flow_fwd = [read_tensor(p) for p in _indexed(flows_dir, "flow_fwd_%05d.vseg")]
        flow_bwd = [read_tensor(p) for p in _indexed(flows_dir, "flow_bwd_%05d.vseg")]
        if n > 1 and (len(flow_fwd) != n - 1 or len(flow_bwd) != n - 1):
            raise FileNotFoundError(
                f"missing input: expected {n - 1} flow pairs in {flows_dir}, "
                f"found {len(flow_fwd)} forward / {len(flow_bwd)} backward"
            )

    frames = None
    if frames_dir is not None:
        frames_dir = Path(frames_dir)
        if not frames_dir.is_dir():
            raise FileNotFoundError(f"missing input: frames directory {frames_dir}")
        frame_paths = _indexed(frames_dir, "frame_%05d.vseg")
        if len(frame_paths) != n:
            raise FileNotFoundError(
                f"missing input: expected {n} frames in {frames_dir}, found {len(frame_paths)}"
            )
        frames = [read_tensor(p) for p in frame_paths]

    gt_masks = None
    if gt_dir is not None:
        gt_dir = Path(gt_dir)
        if not gt_dir.is_dir():
            raise FileNotFoundError(f"missing input: ground-truth directory {gt_dir}")
        gt_paths = _indexed(gt_dir, "gt_%05d.pgm") or _indexed(gt_dir, "gt_%05d.vseg")
        if len(gt_paths) != n:
            raise FileNotFoundError(
                f"missing input: expected {n} gt masks in {gt_dir}, found {len(gt_paths)}"
            )
        gt_masks = [read_gt_mask(p) for p in gt_paths]

    return VideoBundle(
        features=features,
        flow_fwd=flow_fwd,
        flow_bwd=flow_bwd,
        frames=frames,
        gt_masks=gt_masks,
    )


def save_bundle(bundle: VideoBundle, out_dir) -> None:
    """Write a bundle to one directory using the standard file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for p, f in enumerate(bundle.features):
        write_tensor(out / ("feat_%05d.vseg" % p), f)
    for p, (ff, fb) in enumerate(zip(bundle.flow_fwd, bundle.flow_bwd)):
        write_tensor(out / ("flow_fwd_%05d.vseg" % p), ff)
        write_tensor(out / ("flow_bwd_%05d.vseg" % p), fb)
    if bundle.frames is not None:
        for p, fr in enumerate(bundle.frames):
            write_tensor(out / ("frame_%05d.vseg" % p), fr)
    if bundle.gt_masks is not None:
        for p, gm in enumerate(bundle.gt_masks):
            write_mask_image(out / ("gt_%05d.pgm" % p), gm)
