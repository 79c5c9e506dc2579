"""Raster value types: binary masks, depth maps, normal maps, color images.

All rasters are numpy-backed, validated on construction, and frozen
(read-only buffers), so they are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NO_HIT_DEPTH = np.float32(np.inf)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MaskImage:
    """Binary silhouette; values are strictly {0, 1} uint8."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ValueError("mask must be 2-D")
        if d.dtype != np.uint8:
            d = d.astype(np.uint8)
        if not np.isin(d, (0, 1)).all():
            raise ValueError("mask values must be strictly binary {0, 1}")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def area(self) -> int:
        return int(self.data.sum())

    def __and__(self, other: "MaskImage") -> "MaskImage":
        return MaskImage(self.data & other.data)

    def __or__(self, other: "MaskImage") -> "MaskImage":
        return MaskImage(self.data | other.data)

    def is_subset_of(self, other: "MaskImage") -> bool:
        return not np.any((self.data == 1) & (other.data == 0))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel Euclidean ray distance; +inf marks no-hit pixels."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if np.isnan(d).any():
            raise ValueError("depth map contains NaN")
        finite = np.isfinite(d)
        if np.any(d[finite] <= 0.0):
            raise ValueError("finite depths must be positive")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.data)


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel world-frame unit normals; (0, 0, 0) marks no-hit pixels."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("normal map must be (H, W, 3)")
        norms = np.linalg.norm(d.astype(np.float64), axis=2)
        bad = (norms > 1e-6) & (np.abs(norms - 1.0) > 1e-4)
        if bad.any():
            raise ValueError(
                f"{int(bad.sum())} normal(s) are neither unit length nor zero"
            )
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image, shape (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("color image must be (H, W, 3)")
        if d.dtype != np.uint8:
            raise ValueError("color image must be uint8")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def same_dims(*rasters) -> bool:
    shapes = {(r.height, r.width) for r in rasters}
    return len(shapes) == 1
