from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np


@dataclass(frozen=True)
class SkeletonDef:
    """Kinematic tree: joint names, parent indices and T-pose rest offsets (meters)."""
    names: Tuple[str, ...]
    parents: Tuple[int, ...]
    offsets: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(self.parents):
            raise ValueError(f"{len(self.names)} joint names for {len(self.parents)} parents")
        if self.offsets.shape != (len(self.parents), 3):
            raise ValueError(f"offsets must be ({len(self.parents)}, 3), got {self.offsets.shape}")
        for j, p in enumerate(self.parents):
            if j == 0 and p != -1:
                raise ValueError("joint 0 must be the root")
            if j > 0 and not 0 <= p < j:
                raise ValueError(f"joint {j} has parent {p}; parents must precede children")

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def bones(self) -> List[Tuple[int, int]]:
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"Unknown joint: {name}") from None

    def rest_pose(self) -> np.ndarray:
        """Global T-pose joint positions, [J, 3]."""
        pos = np.zeros((self.n_joints, 3))
        for j, p in enumerate(self.parents):
            pos[j] = self.offsets[j] if p < 0 else pos[p] + self.offsets[j]
        return pos


# 22-joint HumanML3D ordering. Y up, character faces +Z, left side is +X.
_HUMANML3D_JOINTS: List[Tuple[str, int, Tuple[float, float, float]]] = [
    ("pelvis",          -1, (0.0, 0.93, 0.0)),
    ("left_hip",         0, (0.06, -0.09, 0.0)),
    ("right_hip",        0, (-0.06, -0.09, 0.0)),
    ("spine1",           0, (0.0, 0.11, 0.0)),
    ("left_knee",        1, (0.0, -0.38, 0.0)),
    ("right_knee",       2, (0.0, -0.38, 0.0)),
    ("spine2",           3, (0.0, 0.13, 0.0)),
    ("left_ankle",       4, (0.0, -0.40, 0.0)),
    ("right_ankle",      5, (0.0, -0.40, 0.0)),
    ("spine3",           6, (0.0, 0.05, 0.0)),
    ("left_foot",        7, (0.0, -0.05, 0.12)),
    ("right_foot",       8, (0.0, -0.05, 0.12)),
    ("neck",             9, (0.0, 0.21, 0.0)),
    ("left_collar",      9, (0.07, 0.12, 0.0)),
    ("right_collar",     9, (-0.07, 0.12, 0.0)),
    ("head",            12, (0.0, 0.09, 0.03)),
    ("left_shoulder",   13, (0.11, 0.03, 0.0)),
    ("right_shoulder",  14, (-0.11, 0.03, 0.0)),
    ("left_elbow",      16, (0.26, 0.0, 0.0)),
    ("right_elbow",     17, (-0.26, 0.0, 0.0)),
    ("left_wrist",      18, (0.25, 0.0, 0.0)),
    ("right_wrist",     19, (-0.25, 0.0, 0.0)),
]

HUMANML3D_SKELETON = SkeletonDef(
    names=tuple(name for name, _, _ in _HUMANML3D_JOINTS),
    parents=tuple(parent for _, parent, _ in _HUMANML3D_JOINTS),
    offsets=np.array([offset for _, _, offset in _HUMANML3D_JOINTS], dtype=np.float64),
)

# Joint table shared by control, editing and evaluation.
PELVIS = 0
LEFT_FOOT = 10
RIGHT_FOOT = 11
HEAD = 15
LEFT_WRIST = 20
RIGHT_WRIST = 21

CONTROL_JOINTS: Dict[str, int] = {
    "pelvis": PELVIS,
    "left_foot": LEFT_FOOT,
    "right_foot": RIGHT_FOOT,
    "head": HEAD,
    "left_wrist": LEFT_WRIST,
    "right_wrist": RIGHT_WRIST,
}
FOOT_JOINTS = (LEFT_FOOT, RIGHT_FOOT)
LOWER_BODY_ANCHORS = (PELVIS, LEFT_FOOT, RIGHT_FOOT)


def bone_lengths(coords: np.ndarray, skeleton: SkeletonDef = HUMANML3D_SKELETON) -> np.ndarray:
    """Per-frame bone lengths, [L, n_bones], in skeleton bone order."""
    parents = np.array([p for p, _ in skeleton.bones])
    children = np.array([c for _, c in skeleton.bones])
    return np.linalg.norm(coords[:, children] - coords[:, parents], axis=-1)
