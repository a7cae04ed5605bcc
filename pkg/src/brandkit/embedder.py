"""Deterministic 4096-dim instance descriptors.

The default embedder is a gradient-orientation histogram: the RoI patch is
divided into a grid of cells (16 x 16 by default) and each cell collects a
magnitude-weighted histogram over orientation bins (16 by default), giving
16*16*16 = 4096 values, L2-normalized. It is deterministic and invariant
to uniform brightness scaling, which makes retrieval tests exact. Any
learned embedder with the same output dimension can replace it without
touching the index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import RoiFeatures, SoftMaskStack, pool_features
from .geometry import Box
from .images import bilinear_sample

DEFAULT_PATCH_SIZE = 64
DEFAULT_GRID_CELLS = 16
DEFAULT_ORIENT_BINS = 16
EMBED_DIM = DEFAULT_GRID_CELLS * DEFAULT_GRID_CELLS * DEFAULT_ORIENT_BINS


@dataclass(frozen=True, eq=False)
class RoiPatch:
    """Square grayscale crop, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"patch must be square 2-d, got shape {v.shape}")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("patch values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Embedding:
    """Descriptor vector; ``normalized`` is False only for the zero vector."""

    values: np.ndarray
    normalized: bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"embedding must be 1-d, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def extract_patch(image: np.ndarray, box: Box, size: int = DEFAULT_PATCH_SIZE) -> RoiPatch:
    """Crop ``box`` from a grayscale image and resample it to size x size."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-d grayscale, got shape {image.shape}")
    if box.width <= 0 or box.height <= 0:
        raise ValueError(f"degenerate box: {box}")
    if size < 2:
        raise ValueError(f"patch size must be >= 2, got {size}")
    xs = box.x1 + (np.arange(size) + 0.5) * (box.width / size) - 0.5
    ys = box.y1 + (np.arange(size) + 0.5) * (box.height / size) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    values = np.clip(bilinear_sample(image, grid_y, grid_x), 0.0, 1.0)
    return RoiPatch(values=values)


def embed_roi(
    patch: RoiPatch,
    grid_cells: int = DEFAULT_GRID_CELLS,
    orient_bins: int = DEFAULT_ORIENT_BINS,
) -> Embedding:
    """Gradient-orientation histogram descriptor of a patch.

    A constant patch has no gradients; it embeds as the zero vector with
    ``normalized=False`` instead of raising.
    """
    p = patch.values
    size = patch.size
    if size % grid_cells != 0:
        raise ValueError(f"patch size {size} not divisible by grid cells {grid_cells}")
    gy, gx = np.gradient(p)
    magnitude = np.hypot(gx, gy)
    angle = np.arctan2(gy, gx)  # (-pi, pi]
    bins = np.floor((angle + np.pi) / (2.0 * np.pi) * orient_bins).astype(np.intp)
    bins = np.clip(bins, 0, orient_bins - 1)
    cell = size // grid_cells
    rows = (np.arange(size) // cell).astype(np.intp)
    flat = (rows[:, None] * grid_cells + rows[None, :]) * orient_bins + bins
    hist = np.zeros(grid_cells * grid_cells * orient_bins, dtype=np.float64)
    np.add.at(hist, flat.ravel(), magnitude.ravel())
    norm = np.linalg.norm(hist)
    if norm == 0.0:
        return Embedding(values=hist, normalized=False)
    return Embedding(values=hist / norm, normalized=True)


class RandomProjector:
    """Fixed seeded Gaussian projection from pooled features to the
    retrieval dimension."""

    def __init__(self, in_dim: int, out_dim: int = EMBED_DIM, seed: int = 0):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("projection dims must be positive")
        rng = np.random.default_rng(seed)
        self.matrix = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, pooled: np.ndarray) -> np.ndarray:
        pooled = np.asarray(pooled, dtype=np.float64)
        if pooled.shape[-1] != self.in_dim:
            raise ValueError(f"pooled dim {pooled.shape[-1]} != {self.in_dim}")
        return pooled @ self.matrix.T


def embed_with_attention(
    feat: RoiFeatures, masks: SoftMaskStack, projector: RandomProjector
) -> list[Embedding]:
    """Mask-pool RoI features, project to the retrieval dimension, normalize."""
    pooled = pool_features(feat, masks)
    projected = projector(pooled)
    out: list[Embedding] = []
    for row in projected:
        norm = np.linalg.norm(row)
        if norm == 0.0:
            out.append(Embedding(values=row.copy(), normalized=False))
        else:
            out.append(Embedding(values=row / norm, normalized=True))
    return out
