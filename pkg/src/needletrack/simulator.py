"""Synthetic scattering-image generator standing in for the optical rig.

A sub-surface isotropic point source at depth z produces a surface
irradiance I(rho) = P * z / (rho^2 + z^2)^(3/2) under the diffusion-dipole
simplification: lateral tip position sets the spot location and depth sets
the peak/spread ratio, so (x, y, z) stays recoverable from a single image.
An orthographic camera maps the surface onto the pixel grid; Poisson shot
noise and Gaussian read noise are added on top of a constant background.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .normalization import NormalizationConfig

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class OpticsConfig:
    camera_height: float = 6.0          # cm above the surface
    image_side: int = 400               # pixels
    field_of_view: float = 16.6         # cm of surface per image side
    source_power: float = 2000.0        # arbitrary irradiance units
    background_level: float = 5.0       # counts
    gaussian_noise_sigma: float = 2.0   # counts
    poisson_noise: bool = True
    max_count: float = 255.0            # saturation level

    def __post_init__(self):
        if self.camera_height <= 0:
            raise ValueError(f"camera_height must be > 0, got {self.camera_height}")
        if self.image_side < 8:
            raise ValueError(f"image_side must be >= 8, got {self.image_side}")
        if self.field_of_view <= 0:
            raise ValueError(f"field_of_view must be > 0, got {self.field_of_view}")

    @property
    def pixel_size(self) -> float:
        """Physical side length of one pixel, cm."""
        return self.field_of_view / self.image_side


@dataclass
class SampleRecord:
    image: np.ndarray       # (1, H, W) pixel counts
    ground_truth: np.ndarray  # (x, y, z) cm


def pixel_centers(cfg: OpticsConfig) -> np.ndarray:
    """Surface coordinates (cm) of pixel centers along one axis."""
    side = cfg.image_side
    return (np.arange(side) + 0.5) * cfg.pixel_size - cfg.field_of_view / 2.0


def render_scatter_image(tip, cfg: OpticsConfig,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Render the surface spot for a tip at (x, y, z) cm; z is depth below surface.

    Returns a (1, side, side) float array of pixel counts in [0, max_count].
    Noise terms require an rng; with rng None the render is noiseless (still
    including the constant background).
    """
    x, y, z = (float(v) for v in tip)
    if z < 0:
        raise ValueError(f"tip depth z must be >= 0, got {z}")
    # avoid the rho=0 singularity when the tip sits exactly at the surface
    z_eff = max(z, cfg.pixel_size)

    axis = pixel_centers(cfg)
    px = axis[None, :] - x       # lateral offsets, x along image columns
    py = axis[:, None] - y       # y along image rows
    rho_sq = px * px + py * py
    irradiance = cfg.source_power * z_eff / (rho_sq + z_eff * z_eff) ** 1.5

    counts = irradiance + cfg.background_level
    if rng is not None:
        if cfg.poisson_noise:
            counts = rng.poisson(np.maximum(counts, 0.0)).astype(np.float64)
        if cfg.gaussian_noise_sigma > 0:
            counts = counts + rng.normal(0.0, cfg.gaussian_noise_sigma, counts.shape)
    return np.clip(counts, 0.0, cfg.max_count)[None]


def _record_rng(seed: int, index: int) -> np.random.Generator:
    # per-record stream so generation order / worker count cannot matter;
    # namespaced under the "dataset" stream id to stay disjoint from the
    # split/init/dropout streams derived from the same experiment seed
    from .seeding import STREAMS
    return np.random.default_rng([int(seed), STREAMS["dataset"], index])


def generate_dataset(n: int, cfg: OpticsConfig, ranges: NormalizationConfig,
                     seed: int) -> list[SampleRecord]:
    """n labeled samples with tips uniform over the physical ranges.

    Deterministic for a fixed seed; each record draws its position and noise
    from its own (seed, index) stream.
    """
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    lo, hi = ranges.mins(), ranges.maxs()
    records = []
    for i in range(n):
        rng = _record_rng(seed, i)
        tip = rng.uniform(lo, hi)
        image = render_scatter_image(tip, cfg, rng=rng)
        records.append(SampleRecord(image=image, ground_truth=tip))
    return records


# --- dataset directory layout: manifest.json + one 8-bit PNG per record,
# --- optional raw float32 sidecar for lossless experiments

def save_dataset(directory, records: list[SampleRecord], cfg: OpticsConfig,
                 ranges: NormalizationConfig, raw_sidecar: bool = False) -> Path:
    from .weights_io import save_tensors  # sidecar reuses the tensor container

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(records):
        name = f"sample_{i:05d}.png"
        img8 = np.clip(np.rint(rec.image[0]), 0, 255).astype(np.uint8)
        Image.fromarray(img8, mode="L").save(directory / name)
        entry = {"image": name,
                 "x": float(rec.ground_truth[0]),
                 "y": float(rec.ground_truth[1]),
                 "z": float(rec.ground_truth[2])}
        if raw_sidecar:
            raw_name = f"sample_{i:05d}.raw"
            save_tensors(directory / raw_name, {"image": rec.image.astype(np.float32)})
            entry["raw"] = raw_name
        entries.append(entry)
    manifest = {
        "version": MANIFEST_VERSION,
        "count": len(records),
        "optics": vars(cfg).copy(),
        "normalization": {"x_range": list(ranges.x_range),
                          "y_range": list(ranges.y_range),
                          "z_range": list(ranges.z_range)},
        "records": entries,
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(directory, prefer_raw: bool = False):
    """Read a dataset directory; returns (records, OpticsConfig, NormalizationConfig)."""
    from .weights_io import load_tensors

    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r} "
                         f"in {manifest_path}")
    cfg = OpticsConfig(**manifest["optics"])
    nm = manifest["normalization"]
    ranges = NormalizationConfig(x_range=tuple(nm["x_range"]),
                                 y_range=tuple(nm["y_range"]),
                                 z_range=tuple(nm["z_range"]))
    records = []
    for entry in manifest["records"]:
        if prefer_raw and "raw" in entry:
            image = load_tensors(directory / entry["raw"])["image"].astype(np.float64)
        else:
            img_path = directory / entry["image"]
            if not img_path.is_file():
                raise FileNotFoundError(f"missing image file {img_path}")
            image = np.asarray(Image.open(img_path), dtype=np.float64)[None]
        tip = np.array([entry["x"], entry["y"], entry["z"]])
        records.append(SampleRecord(image=image, ground_truth=tip))
    if len(records) != manifest["count"]:
        raise ValueError(f"manifest count {manifest['count']} != {len(records)} records")
    return records, cfg, ranges
