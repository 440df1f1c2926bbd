"""
Sparse spatial control: keyframe constraints and their dense grid form.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from pipeline.motion_data.normalization import normalize_array
from pipeline.motion_data.skeleton import LOWER_BODY_ANCHORS

DENSITY_LEVELS = (0.01, 0.02, 0.05, 0.25, 1.0)


@dataclass(frozen=True)
class Constraint:
    frame: int
    joint: int
    target: tuple  # (x, y, z) meters

    def to_dict(self) -> Dict:
        return {"frame": int(self.frame), "joint": int(self.joint), "target": [float(v) for v in self.target]}


@dataclass
class ControlSpec:
    constraints: List[Constraint] = field(default_factory=list)
    density: float = 1.0

    def __post_init__(self):
        seen = set()
        for c in self.constraints:
            key = (c.frame, c.joint)
            if key in seen:
                raise ValueError(f"duplicate constraint at frame {c.frame}, joint {c.joint}")
            seen.add(key)
            if len(c.target) != 3:
                raise ValueError(f"constraint target must be xyz, got {c.target}")

    def __len__(self) -> int:
        return len(self.constraints)

    @property
    def frames(self) -> List[int]:
        return sorted({c.frame for c in self.constraints})

    @property
    def joints(self) -> List[int]:
        return sorted({c.joint for c in self.constraints})

    def validate(self, frames: int, joints: int) -> None:
        for c in self.constraints:
            if not 0 <= c.frame < frames or not 0 <= c.joint < joints:
                raise ValueError(
                    f"constraint (frame {c.frame}, joint {c.joint}) outside a {frames} x {joints} motion"
                )

    def to_dict(self) -> Dict:
        return {"constraints": [c.to_dict() for c in self.constraints], "density": float(self.density)}

    @classmethod
    def from_dict(cls, d: Dict) -> "ControlSpec":
        try:
            constraints = [
                Constraint(int(c["frame"]), int(c["joint"]), tuple(float(v) for v in c["target"]))
                for c in d["constraints"]
            ]
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed control spec: {e}") from e
        return cls(constraints=constraints, density=float(d.get("density", 1.0)))


def save_control_spec(spec: ControlSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec.to_dict(), indent=2))
    return path


def load_control_spec(path: Union[str, Path]) -> ControlSpec:
    with open(path) as f:
        return ControlSpec.from_dict(json.load(f))


def keyframe_count(density: float, frames: int) -> int:
    """round(density * frames), half rounded up, never below one."""
    return max(1, int(np.floor(density * frames + 0.5)))


def sample_control_spec(
    gt: MotionSequence,
    density: float,
    joint_set: Sequence[int],
    rng: np.random.Generator,
) -> ControlSpec:
    """Constrain `joint_set` at a uniformly drawn subset of frames, targets taken from gt."""
    if density not in DENSITY_LEVELS:
        raise ValueError(f"density must be one of {DENSITY_LEVELS}, got {density}")
    if len(joint_set) == 0:
        raise ValueError("empty joint set")
    for j in joint_set:
        if not 0 <= j < gt.joints:
            raise ValueError(f"joint {j} outside a {gt.joints}-joint skeleton")
    count = keyframe_count(density, gt.frames)
    frames = np.sort(rng.choice(gt.frames, size=count, replace=False))
    constraints = [
        Constraint(int(f), int(j), tuple(float(v) for v in gt.coords[f, j]))
        for f in frames for j in joint_set
    ]
    return ControlSpec(constraints=constraints, density=density)


def upper_body_spec(source: MotionSequence) -> ControlSpec:
    """Every frame of pelvis and both feet pinned to the source."""
    frames = np.arange(source.frames)
    constraints = [
        Constraint(int(f), int(j), tuple(float(v) for v in source.coords[f, j]))
        for f in frames for j in LOWER_BODY_ANCHORS
    ]
    return ControlSpec(constraints=constraints, density=1.0)


@dataclass
class ControlGrid:
    values: np.ndarray  # [L, N, 3] normalized, zero where unconstrained
    mask: np.ndarray    # [L, N, 1]

    def __post_init__(self):
        if self.values.shape[:2] != self.mask.shape[:2] or self.mask.shape[-1] != 1:
            raise ValueError(f"values {self.values.shape} and mask {self.mask.shape} disagree")

    def stacked(self) -> np.ndarray:
        """values || mask along channels, [L, N, 4]."""
        return np.concatenate([self.values, self.mask], axis=-1).astype(np.float32)


def spec_targets(spec: ControlSpec, frames: int, joints: int) -> ControlGrid:
    """Same layout as encode_control but in meters; used by the control loss."""
    spec.validate(frames, joints)
    values = np.zeros((frames, joints, 3), dtype=np.float32)
    mask = np.zeros((frames, joints, 1), dtype=np.float32)
    for c in spec.constraints:
        values[c.frame, c.joint] = c.target
        mask[c.frame, c.joint] = 1.0
    return ControlGrid(values=values, mask=mask)


def encode_control(spec: ControlSpec, frames: int, joints: int, stats: NormalizationStats) -> ControlGrid:
    """Dense grid in normalized coordinates; unconstrained sites stay exactly zero."""
    metric = spec_targets(spec, frames, joints)
    values = normalize_array(metric.values, stats) * metric.mask
    return ControlGrid(values=values.astype(np.float32), mask=metric.mask)
