"""Affine maps between physical tip coordinates (cm) and network targets.

Each axis's data range maps onto [-1, 1]; out-of-range values extrapolate
linearly (no clamping) and raise a violation flag instead, so bad labels
cannot silently corrupt training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# default per-axis physical ranges, cm
DEFAULT_X_RANGE = (-8.3, 8.3)
DEFAULT_Y_RANGE = (-5.5, 5.5)
DEFAULT_Z_RANGE = (0.0, 6.5)


@dataclass(frozen=True)
class NormalizationConfig:
    x_range: tuple[float, float] = DEFAULT_X_RANGE
    y_range: tuple[float, float] = DEFAULT_Y_RANGE
    z_range: tuple[float, float] = DEFAULT_Z_RANGE

    def __post_init__(self):
        for axis, (lo, hi) in zip("xyz", self.ranges()):
            if not hi > lo:
                raise ValueError(f"{axis}_range max must exceed min, got [{lo}, {hi}]")

    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (tuple(self.x_range), tuple(self.y_range), tuple(self.z_range))

    def mins(self) -> np.ndarray:
        return np.array([r[0] for r in self.ranges()])

    def maxs(self) -> np.ndarray:
        return np.array([r[1] for r in self.ranges()])


def normalize_position(position, cfg: NormalizationConfig):
    """Map physical (x, y, z) cm to normalized coordinates.

    Returns (normalized triple, out_of_range flag).  Endpoints map to -1/+1
    exactly; values outside the data range extrapolate past +-1.
    """
    p = np.asarray(position, dtype=np.float64)
    lo, hi = cfg.mins(), cfg.maxs()
    n = 2.0 * (p - lo) / (hi - lo) - 1.0
    out_of_range = bool(np.any(p < lo) or np.any(p > hi))
    return n, out_of_range


def denormalize_position(normalized, cfg: NormalizationConfig) -> np.ndarray:
    """Exact affine inverse of :func:`normalize_position`; returns cm."""
    n = np.asarray(normalized, dtype=np.float64)
    lo, hi = cfg.mins(), cfg.maxs()
    return (n + 1.0) / 2.0 * (hi - lo) + lo


def normalize_image(raw: np.ndarray, max_count: float = 255.0) -> np.ndarray:
    """Scale pixel counts to [0, 1] and replicate monochrome to 3 channels.

    Accepts (H, W), (1, H, W) or (3, H, W); rejects negative pixels.
    """
    img = np.asarray(raw)
    if np.any(img < 0):
        raise ValueError("negative pixel values in input image")
    img = img.astype(np.float32) / np.float32(max_count)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected (H,W), (1,H,W) or (3,H,W) image, got shape {raw.shape}")
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    return img
