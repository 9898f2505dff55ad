import json

import numpy as np
import pytest

from needletrack.pivot import (DegeneratePosesError, Pose, PivotResult,
                               load_poses, pivot_calibrate, save_calibration)


def random_rotation(rng):
    # QR of a Gaussian matrix, sign-fixed to a proper rotation
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def synthetic_poses(tip_offset, pivot_point, n, rng, noise=0.0):
    poses = []
    for _ in range(n):
        rot = random_rotation(rng)
        trans = pivot_point - rot @ tip_offset
        if noise:
            trans = trans + rng.normal(0, noise, 3)
        poses.append(Pose(rotation=rot, translation=trans))
    return poses


TIP = np.array([0.4, -1.2, 8.7])
PIVOT = np.array([3.0, 2.0, -5.0])


def test_noiseless_recovery():
    poses = synthetic_poses(TIP, PIVOT, 30, np.random.default_rng(0))
    result = pivot_calibrate(poses)
    assert np.max(np.abs(result.tip_offset - TIP)) < 1e-9
    assert np.max(np.abs(result.pivot_point - PIVOT)) < 1e-9
    assert result.rms_residual < 1e-9


def test_identical_rotations_rejected():
    rot = random_rotation(np.random.default_rng(1))
    poses = [Pose(rotation=rot, translation=np.array([i, 0.0, 0.0])) for i in range(5)]
    with pytest.raises(DegeneratePosesError, match="condition number"):
        pivot_calibrate(poses)


def test_too_few_poses_rejected():
    poses = synthetic_poses(TIP, PIVOT, 2, np.random.default_rng(2))
    with pytest.raises(ValueError, match="at least 3"):
        pivot_calibrate(poses)


def test_translation_equivariance():
    rng = np.random.default_rng(3)
    poses = synthetic_poses(TIP, PIVOT, 25, rng)
    shift = np.array([1.5, -2.0, 0.25])
    shifted = [Pose(rotation=p.rotation, translation=p.translation + shift) for p in poses]
    base = pivot_calibrate(poses)
    moved = pivot_calibrate(shifted)
    assert np.max(np.abs(moved.pivot_point - (base.pivot_point + shift))) < 1e-9
    assert np.max(np.abs(moved.tip_offset - base.tip_offset)) < 1e-9


def test_rotation_frame_equivariance():
    rng = np.random.default_rng(4)
    poses = synthetic_poses(TIP, PIVOT, 25, rng)
    q = random_rotation(rng)
    rotated = [Pose(rotation=q @ p.rotation, translation=q @ p.translation) for p in poses]
    base = pivot_calibrate(poses)
    moved = pivot_calibrate(rotated)
    assert np.max(np.abs(moved.pivot_point - q @ base.pivot_point)) < 1e-9
    assert np.max(np.abs(moved.tip_offset - base.tip_offset)) < 1e-9


def test_noise_scaling():
    sigma = 0.05
    poses = synthetic_poses(TIP, PIVOT, 200, np.random.default_rng(5), noise=sigma)
    result = pivot_calibrate(poses)
    assert sigma / 2 < result.rms_residual < sigma * 2


def test_pose_validation():
    with pytest.raises(ValueError, match="orthonormal"):
        Pose(rotation=np.eye(3) * 2.0, translation=np.zeros(3))
    with pytest.raises(ValueError, match="determinant"):
        Pose(rotation=np.diag([1.0, 1.0, -1.0]), translation=np.zeros(3))


def test_pose_file_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    poses = synthetic_poses(TIP, PIVOT, 10, rng)
    payload = [{"rotation": p.rotation.reshape(-1).tolist(),
                "translation": p.translation.tolist(),
                "unit": "cm"} for p in poses]
    path = tmp_path / "poses.json"
    path.write_text(json.dumps(payload))
    loaded = load_poses(path)
    result = pivot_calibrate(loaded)
    assert np.max(np.abs(result.tip_offset - TIP)) < 1e-9


def test_pose_file_bad_unit_rejected(tmp_path):
    path = tmp_path / "poses.json"
    path.write_text(json.dumps([{"rotation": np.eye(3).reshape(-1).tolist(),
                                 "translation": [0, 0, 0], "unit": "mm"}]))
    with pytest.raises(ValueError, match="unit"):
        load_poses(path)


def test_save_calibration(tmp_path):
    result = PivotResult(tip_offset=TIP, pivot_point=PIVOT, rms_residual=0.01)
    out = tmp_path / "calibration.json"
    save_calibration(out, result)
    payload = json.loads(out.read_text())
    assert payload["tip_offset_cm"] == pytest.approx(TIP.tolist())
    assert payload["rms_residual_cm"] == 0.01
