"""
Ingestion of the 263-dim HumanML3D feature layout into absolute coordinates.

The redundant layout stores root motion as per-frame velocities and every
other joint relative to the root's heading. Recovering world positions
integrates the root yaw and XZ velocities and rotates the root-relative
joint positions back into the world frame.
"""
from typing import Dict, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from pipeline.motion_data.motion import DEFAULT_FPS, MotionSequence

N_JOINTS = 22
FEATURE_DIM = 263

# name -> [start, stop) in the 263-dim vector
LAYOUT: Dict[str, Tuple[int, int]] = {
    "root_rot_vel": (0, 1),
    "root_lin_vel": (1, 3),
    "root_y": (3, 4),
    "ric": (4, 4 + (N_JOINTS - 1) * 3),
    "rot": (4 + (N_JOINTS - 1) * 3, 4 + (N_JOINTS - 1) * 9),
    "local_vel": (4 + (N_JOINTS - 1) * 9, 4 + (N_JOINTS - 1) * 9 + N_JOINTS * 3),
    "foot_contact": (FEATURE_DIM - 4, FEATURE_DIM),
}


def _block(features: np.ndarray, name: str) -> np.ndarray:
    start, stop = LAYOUT[name]
    return features[:, start:stop]


def _check_layout(features: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
        raise ValueError(f"unsupported feature layout: expected [L, {FEATURE_DIM}], got {features.shape}")


def root_yaw(features: np.ndarray) -> np.ndarray:
    """Cumulative root yaw per frame; the velocity at frame k moves frame k+1."""
    features = np.asarray(features, dtype=np.float64)
    _check_layout(features)
    rot_vel = _block(features, "root_rot_vel")[:, 0]
    yaw = np.zeros(len(features))
    yaw[1:] = np.cumsum(rot_vel[:-1])
    return yaw


def heading_rotation(yaw: np.ndarray) -> Rotation:
    """
    Root heading for a given yaw; the layout encodes it as the Y-axis
    quaternion (cos yaw, 0, sin yaw, 0), i.e. a rotation by 2*yaw.
    """
    return Rotation.from_rotvec(np.outer(2.0 * yaw, [0.0, 1.0, 0.0]))


def humanml3d_to_absolute(redundant: np.ndarray, fps: float = DEFAULT_FPS) -> MotionSequence:
    features = np.asarray(redundant, dtype=np.float64)
    _check_layout(features)
    n = len(features)

    to_world = heading_rotation(root_yaw(features)).inv().as_matrix()

    root_vel = np.zeros((n, 3))
    root_vel[1:, [0, 2]] = _block(features, "root_lin_vel")[:-1]
    root = np.cumsum(np.einsum("lij,lj->li", to_world, root_vel), axis=0)
    root[:, 1] = _block(features, "root_y")[:, 0]

    local = _block(features, "ric").reshape(n, N_JOINTS - 1, 3)
    joints = np.einsum("lij,lnj->lni", to_world, local)
    joints[..., 0] += root[:, None, 0]
    joints[..., 2] += root[:, None, 2]

    coords = np.concatenate([root[:, None, :], joints], axis=1)
    return MotionSequence(coords, fps=fps)
