"""Soft-mask attention over RoI feature maps.

Masks arrive as class-agnostic heatmaps of shape (R, 1, M, M) with values
already in [0, 1]; no squashing happens here. They either gate features
elementwise or pool them into per-region vectors via a normalized weighted
average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .images import bilinear_sample

DEFAULT_MASK_SIZE = 28


@dataclass(frozen=True, eq=False)
class RoiFeatures:
    """Feature maps for R regions: shape (R, C, M, M)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"features must have shape (R, C, M, M), got {v.shape}")
        if v.shape[2] != v.shape[3]:
            raise ValueError(f"spatial dims must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "values", v)

    @property
    def num_regions(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    @property
    def spatial_size(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class SoftMaskStack:
    """Class-agnostic soft masks: shape (R, 1, M, M), entries in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"masks must have shape (R, K, M, M), got {v.shape}")
        if v.shape[1] != 1:
            raise ValueError(f"masks are class-agnostic: K must be 1, got {v.shape[1]}")
        if v.shape[2] != v.shape[3]:
            raise ValueError(f"spatial dims must be square, got {v.shape}")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def num_regions(self) -> int:
        return self.values.shape[0]

    @property
    def spatial_size(self) -> int:
        return self.values.shape[2]


def _check_compatible(feat: RoiFeatures, masks: SoftMaskStack) -> None:
    if feat.num_regions != masks.num_regions or feat.spatial_size != masks.spatial_size:
        raise ValueError(
            f"shape mismatch: features {feat.values.shape} vs masks {masks.values.shape}"
        )


def gate_features(feat: RoiFeatures, masks: SoftMaskStack) -> RoiFeatures:
    """Elementwise gating: out[r,c,i,j] = feat[r,c,i,j] * mask[r,0,i,j]."""
    _check_compatible(feat, masks)
    return RoiFeatures(feat.values * masks.values)


def pool_features(feat: RoiFeatures, masks: SoftMaskStack) -> np.ndarray:
    """Mask-weighted spatial average per region; returns shape (R, C).

    out[r, c] = sum_ij mask[r,0,i,j] * feat[r,c,i,j] / sum_ij mask[r,0,i,j]
    """
    _check_compatible(feat, masks)
    weights = masks.values[:, 0, :, :]
    totals = weights.sum(axis=(1, 2))
    dead = np.nonzero(totals <= 0.0)[0]
    if dead.size:
        raise ValueError(f"all-zero mask for region(s) {dead.tolist()}: pooling undefined")
    weighted = (feat.values * masks.values).sum(axis=(2, 3))
    return weighted / totals[:, None]


def heatmap_overlay(mask: np.ndarray, box: Box, image_size: tuple[int, int]) -> np.ndarray:
    """Rasterize an M x M mask into image coordinates over ``box``.

    The mask is bilinearly upsampled to cover the box; pixels outside the
    box are zero. ``image_size`` is (width, height).
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ValueError(f"mask must be square 2-d, got shape {mask.shape}")
    if box.width <= 0 or box.height <= 0:
        raise ValueError(f"degenerate box: {box}")
    width, height = image_size
    out = np.zeros((height, width), dtype=np.float64)
    m = mask.shape[0]
    # pixels whose centers fall inside the box
    x_lo = max(int(np.ceil(box.x1 - 0.5)), 0)
    x_hi = min(int(np.floor(box.x2 - 0.5)), width - 1)
    y_lo = max(int(np.ceil(box.y1 - 0.5)), 0)
    y_hi = min(int(np.floor(box.y2 - 0.5)), height - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return out
    px = np.arange(x_lo, x_hi + 1)
    py = np.arange(y_lo, y_hi + 1)
    # map pixel centers into mask coordinates (half-pixel-center convention)
    mx = (px + 0.5 - box.x1) / box.width * m - 0.5
    my = (py + 0.5 - box.y1) / box.height * m - 0.5
    grid_y, grid_x = np.meshgrid(my, mx, indexing="ij")
    out[y_lo : y_hi + 1, x_lo : x_hi + 1] = bilinear_sample(mask, grid_y, grid_x)
    return out
