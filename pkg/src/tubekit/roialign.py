"""Bilinear RoI pooling of feature grids along track boxes.

Boxes live in image pixels; grids are strided feature maps. The coordinate
transform uses the half-pixel (aligned) convention: feature coordinate =
pixel / stride - 0.5. Sample points falling outside the grid read zero,
which keeps the kernels linear and spares callers any box clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box

__all__ = [
    "FeatureGrid",
    "bilinear_sample",
    "roi_align",
    "align_tracks",
    "spatial_avg_pool",
]


@dataclass
class FeatureGrid:
    """Backbone features for a clip: (frames, channels, height, width) plus stride."""

    values: np.ndarray
    spatial_stride: float

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 4 or min(arr.shape) < 1:
            raise ValueError(f"feature grid must be (T, C, H, W), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature grid must be finite")
        if self.spatial_stride <= 0:
            raise ValueError("spatial stride must be positive")
        self.values = arr
        self.spatial_stride = float(self.spatial_stride)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


def bilinear_sample(grid: np.ndarray, x: float, y: float) -> np.ndarray:
    """Bilinearly interpolate a (C, H, W) grid at continuous (x, y).

    Integer-neighbor cells outside the grid contribute zero.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("sample coordinates must be finite")
    c, h, w = grid.shape
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    out = np.zeros(c, dtype=np.float64)
    for yy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        if wy == 0.0 or not 0 <= yy < h:
            continue
        for xx, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            if wx == 0.0 or not 0 <= xx < w:
                continue
            out += grid[:, yy, xx].astype(np.float64) * (wy * wx)
    return out


def _bilinear_grid(grid: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample grid at the cartesian product ys x xs; returns (C, len(ys), len(xs))."""
    c, h, w = grid.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros((c, len(ys), len(xs)), dtype=np.float64)
    for yy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        my = (yy >= 0) & (yy < h)
        wyv = wy * my
        yc = np.clip(yy, 0, h - 1)
        for xx, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            mx = (xx >= 0) & (xx < w)
            wxv = wx * mx
            xc = np.clip(xx, 0, w - 1)
            sub = grid[:, yc[:, None], xc[None, :]]
            out += sub * (wyv[None, :, None] * wxv[None, None, :])
    return out


def roi_align(grid: np.ndarray, box: Box, spatial_stride: float,
              output_size: int = 7, sampling_ratio: int = 2) -> np.ndarray:
    """Pool a (C, H, W) grid over a pixel-space box into (C, P, P) bins.

    The box maps to feature coordinates via the half-pixel transform, is
    split into P x P bins, and each bin averages an s x s lattice of
    interior bilinear samples. A degenerate box collapses every sample to
    one point and is not an error.
    """
    if output_size < 1:
        raise ValueError("output_size must be >= 1")
    if sampling_ratio < 1:
        raise ValueError("sampling_ratio must be >= 1")
    if spatial_stride <= 0:
        raise ValueError("spatial stride must be positive")
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 3:
        raise ValueError(f"grid must be (C, H, W), got shape {g.shape}")
    p = output_size
    s = sampling_ratio
    x1 = box.x1 / spatial_stride - 0.5
    y1 = box.y1 / spatial_stride - 0.5
    x2 = box.x2 / spatial_stride - 0.5
    y2 = box.y2 / spatial_stride - 0.5
    bin_w = (x2 - x1) / p
    bin_h = (y2 - y1) / p
    idx = np.arange(p, dtype=np.float64)[:, None]
    sub = (np.arange(s, dtype=np.float64)[None, :] + 0.5) / s
    xs = (x1 + (idx + sub) * bin_w).reshape(-1)
    ys = (y1 + (idx + sub) * bin_h).reshape(-1)
    vals = _bilinear_grid(g, ys, xs)
    c = g.shape[0]
    return vals.reshape(c, p, s, p, s).mean(axis=(2, 4))


def align_tracks(features: FeatureGrid, tracks, output_size: int = 7,
                 sampling_ratio: int = 2) -> np.ndarray:
    """Pool clip features along each track: returns (n_tracks, T, C, P, P).

    Track frames index the clip window [0, T). Where a track is shorter
    than the clip, its first/last box is replicated outward in time. A
    track entirely outside the window is an error.
    """
    T = features.num_frames
    c = features.values.shape[1]
    p = output_size
    out = np.zeros((len(tracks), T, c, p, p), dtype=np.float64)
    for n, tr in enumerate(tracks):
        geo = tr.geometry
        if geo.start_frame >= T or geo.end_frame < 0:
            raise ValueError(
                f"track {tr.key} covers frames [{geo.start_frame}, {geo.end_frame}], "
                f"outside the clip window [0, {T})"
            )
        for f in range(T):
            clamped = min(max(f, geo.start_frame), geo.end_frame)
            out[n, f] = roi_align(
                features.values[f], geo.box_at(clamped), features.spatial_stride,
                output_size=p, sampling_ratio=sampling_ratio,
            )
    return out


def spatial_avg_pool(track_features: np.ndarray) -> np.ndarray:
    """Average the trailing (P, P) cells: (..., C, P, P) -> (..., C)."""
    arr = np.asarray(track_features)
    if arr.ndim < 3:
        raise ValueError(f"expected (..., C, P, P), got shape {arr.shape}")
    return arr.mean(axis=(-2, -1))
