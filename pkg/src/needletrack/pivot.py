"""Pivot calibration: recover a tracked sensor's fixed tip offset.

While the tool tip rests on a stationary point, each measured pose
(R_i, p_i) satisfies R_i t + p_i = b for the unknown tip offset t (sensor
frame) and pivot point b (coil frame).  Stacking [R_i | -I] [t; b] = -p_i
gives an overdetermined linear system solved by SVD least squares.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ORTHONORMAL_TOL = 1e-9
CONDITION_LIMIT = 1e8


class DegeneratePosesError(ValueError):
    """The pose set does not constrain the tip offset (rank deficient)."""


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray     # 3x3, sensor -> coil frame
    translation: np.ndarray  # 3, sensor origin in coil frame, cm

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"pose needs 3x3 rotation and 3-vector translation, "
                             f"got {r.shape} and {t.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation matrix determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class PivotResult:
    tip_offset: np.ndarray   # sensor frame, cm
    pivot_point: np.ndarray  # coil frame, cm
    rms_residual: float      # cm


def pivot_calibrate(poses: list[Pose], min_poses: int = 3) -> PivotResult:
    """Least-squares tip offset and pivot point from pivoting poses.

    Rejects under-constrained inputs (too few poses, identical rotations,
    or any pose set whose stacked system has condition number > 1e8).
    """
    if len(poses) < min_poses:
        raise ValueError(f"need at least {min_poses} poses, got {len(poses)}")

    a = np.zeros((3 * len(poses), 6))
    b = np.zeros(3 * len(poses))
    for i, pose in enumerate(poses):
        a[3 * i:3 * i + 3, :3] = pose.rotation
        a[3 * i:3 * i + 3, 3:] = -np.eye(3)
        b[3 * i:3 * i + 3] = -pose.translation

    singular = np.linalg.svd(a, compute_uv=False)
    cond = np.inf if singular[-1] == 0 else singular[0] / singular[-1]
    if cond > CONDITION_LIMIT:
        raise DegeneratePosesError(
            f"pose set is rank deficient: condition number {cond:.3e} exceeds "
            f"{CONDITION_LIMIT:.0e} (rotations too similar?)")

    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    tip_offset, pivot_point = solution[:3], solution[3:]
    residuals = (a @ solution - b).reshape(-1, 3)
    rms = float(np.sqrt(np.mean(np.sum(residuals ** 2, axis=1))))
    return PivotResult(tip_offset=tip_offset, pivot_point=pivot_point, rms_residual=rms)


def load_poses(path) -> list[Pose]:
    """Read a pose list file: JSON array of {rotation: 9 row-major, translation: 3, unit: "cm"}."""
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise ValueError(f"{path}: pose file must be a JSON array")
    poses = []
    for i, e in enumerate(entries):
        if e.get("unit", "cm") != "cm":
            raise ValueError(f"{path}: pose {i} has unsupported unit {e['unit']!r}")
        rot = np.array(e["rotation"], dtype=np.float64).reshape(3, 3)
        poses.append(Pose(rotation=rot, translation=np.array(e["translation"], dtype=np.float64)))
    return poses


def save_calibration(path, result: PivotResult) -> None:
    payload = {
        "tip_offset_cm": [float(v) for v in result.tip_offset],
        "pivot_point_cm": [float(v) for v in result.pivot_point],
        "rms_residual_cm": result.rms_residual,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
