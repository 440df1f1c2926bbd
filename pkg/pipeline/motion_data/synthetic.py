"""
Synthetic text-motion corpus.

Six parameterized motion families are posed with forward kinematics over a
fixed-offset skeleton, so bone lengths never change within a sequence. Each
sequence is ground-locked per frame (lowest joint at Y=0) before any
airborne offset is added.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from pipeline.motion_data.motion import (
    DEFAULT_FPS,
    DatasetManifest,
    ManifestEntry,
    MotionSequence,
)
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON, SkeletonDef

MIN_FRAMES = 40
MAX_FRAMES = 196
FAMILIES = ("walk_line", "walk_circle", "turn", "raise_arm", "crouch", "jump")

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])
_ARM_DOWN = np.deg2rad(75.0)


@dataclass
class SynthSample:
    motion: MotionSequence
    global_rotations: np.ndarray  # [L, J, 3, 3]
    captions: List[str]
    family: str


def _axis_rot(axis: np.ndarray, angles: np.ndarray) -> Rotation:
    return Rotation.from_rotvec(np.outer(angles, axis))


class _Pose:
    """Per-joint local rotations over L frames plus a root trajectory."""

    def __init__(self, skeleton: SkeletonDef, length: int):
        self.skeleton = skeleton
        self.length = length
        self.local = [Rotation.identity(length) for _ in range(skeleton.n_joints)]
        self.root = np.tile(skeleton.offsets[0], (length, 1))
        self.lift = np.zeros(length)
        self.rotate("left_shoulder", _Z, np.full(length, -_ARM_DOWN))
        self.rotate("right_shoulder", _Z, np.full(length, _ARM_DOWN))

    def rotate(self, joint: str, axis: np.ndarray, angles: np.ndarray) -> None:
        """Compose a rotation applied after the joint's current local rotation."""
        j = self.skeleton.index(joint)
        self.local[j] = _axis_rot(axis, angles) * self.local[j]

    def solve(self) -> Tuple[np.ndarray, np.ndarray]:
        sk = self.skeleton
        n = self.length
        global_rot: List[Rotation] = [None] * sk.n_joints
        pos = np.zeros((n, sk.n_joints, 3))
        for j, p in enumerate(sk.parents):
            if p < 0:
                global_rot[j] = self.local[j]
                pos[:, j] = self.root
            else:
                global_rot[j] = global_rot[p] * self.local[j]
                pos[:, j] = pos[:, p] + global_rot[p].apply(sk.offsets[j])
        pos[:, :, 1] -= pos[:, :, 1].min(axis=1, keepdims=True)
        pos[:, :, 1] += self.lift[:, None]
        rotmats = np.stack([r.as_matrix() for r in global_rot], axis=1)
        return pos, rotmats


def _gait(pose: _Pose, phase: np.ndarray, amp: float) -> None:
    swing = amp * np.sin(phase)
    pose.rotate("left_hip", _X, -swing)
    pose.rotate("right_hip", _X, swing)
    pose.rotate("left_knee", _X, 1.2 * amp * np.clip(np.sin(phase + np.pi / 2), 0.0, None))
    pose.rotate("right_knee", _X, 1.2 * amp * np.clip(np.sin(phase - np.pi / 2), 0.0, None))
    pose.rotate("left_shoulder", _X, 0.6 * swing)
    pose.rotate("right_shoulder", _X, -0.6 * swing)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _walk_line(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    speed = rng.uniform(0.8, 1.5)
    heading = rng.uniform(-np.pi, np.pi)
    cadence = rng.uniform(0.8, 1.1)
    direction = np.array([np.sin(heading), 0.0, np.cos(heading)])
    # centered on the origin to keep float32 coordinates small
    pose.root = pose.root + speed * (t - t[-1] / 2)[:, None] * direction
    pose.rotate("pelvis", _Y, np.full(len(t), heading))
    _gait(pose, 2 * np.pi * cadence * t, rng.uniform(0.35, 0.55))
    return ["a person walks forward", "someone walks straight ahead",
            "a person walks in a straight line"]


def _walk_circle(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    radius = rng.uniform(1.0, 2.5)
    speed = rng.uniform(0.8, 1.3)
    sign = rng.choice([-1.0, 1.0])
    theta = rng.uniform(-np.pi, np.pi) + sign * speed * t / radius
    pose.root = pose.root + radius * np.stack([np.cos(theta), np.zeros_like(theta), np.sin(theta)], axis=1)
    heading = np.arctan2(-sign * np.sin(theta), sign * np.cos(theta))
    pose.rotate("pelvis", _Y, heading)
    _gait(pose, 2 * np.pi * rng.uniform(0.8, 1.1) * t, rng.uniform(0.35, 0.5))
    turn = "counterclockwise" if sign > 0 else "clockwise"
    return ["a person walks in a circle", "someone walks around in a circle",
            f"a person walks {turn} in a circle"]


def _turn(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    sweep = rng.choice([-1.0, 1.0]) * rng.uniform(np.pi / 2, np.pi)
    progress = _smoothstep(t / t[-1]) if t[-1] > 0 else np.zeros_like(t)
    pose.rotate("pelvis", _Y, rng.uniform(-np.pi, np.pi) + sweep * progress)
    _gait(pose, 2 * np.pi * 1.2 * t, 0.12 * np.sin(np.pi * progress))
    side = "left" if sweep > 0 else "right"
    return ["a person turns around", f"a person turns to the {side}"]


def _raise_arm(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    side = rng.choice(["left", "right", "both"])
    lift = np.deg2rad(rng.uniform(110.0, 150.0)) * np.sin(np.pi * t / max(t[-1], 1e-6)) ** 2
    pose.rotate("pelvis", _Y, np.full(len(t), rng.uniform(-np.pi, np.pi)))
    if side in ("left", "both"):
        pose.rotate("left_shoulder", _Z, lift)
    if side in ("right", "both"):
        pose.rotate("right_shoulder", _Z, -lift)
    if side == "both":
        return ["a person raises both arms", "someone lifts both arms up and lowers them"]
    return [f"a person raises their {side} arm", f"someone lifts their {side} arm up and lowers it"]


def _crouch_profile(pose: _Pose, depth: np.ndarray) -> None:
    hip = np.deg2rad(95.0) * depth
    for side in ("left", "right"):
        pose.rotate(f"{side}_hip", _X, -hip)
        pose.rotate(f"{side}_knee", _X, 2.0 * hip)
        pose.rotate(f"{side}_ankle", _X, -hip)
    pose.rotate("spine1", _X, 0.5 * hip)


def _crouch(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    depth = rng.uniform(0.3, 0.7) * np.sin(np.pi * t / max(t[-1], 1e-6)) ** 2
    pose.rotate("pelvis", _Y, np.full(len(t), rng.uniform(-np.pi, np.pi)))
    _crouch_profile(pose, depth)
    return ["a person crouches down and stands back up", "someone squats down"]


def _jump(pose: _Pose, t: np.ndarray, rng: np.random.Generator) -> List[str]:
    x = t / max(t[-1], 1e-6)
    height = rng.uniform(0.2, 0.45)
    air = (x > 0.4) & (x < 0.7)
    xa = (x - 0.4) / 0.3
    pose.lift = np.where(air, 4.0 * height * xa * (1.0 - xa), 0.0)
    depth = 0.45 * (np.exp(-((x - 0.3) / 0.08) ** 2) + np.exp(-((x - 0.8) / 0.08) ** 2))
    pose.rotate("pelvis", _Y, np.full(len(t), rng.uniform(-np.pi, np.pi)))
    _crouch_profile(pose, depth)
    arms = np.deg2rad(120.0) * np.where(air, np.sin(np.pi * xa), 0.0)
    pose.rotate("left_shoulder", _Z, arms)
    pose.rotate("right_shoulder", _Z, -arms)
    return ["a person jumps up in place", "someone jumps"]


_FAMILY_BUILDERS: Dict[str, Callable[[_Pose, np.ndarray, np.random.Generator], List[str]]] = {
    "walk_line": _walk_line,
    "walk_circle": _walk_circle,
    "turn": _turn,
    "raise_arm": _raise_arm,
    "crouch": _crouch,
    "jump": _jump,
}


def synth_sequence(
    family: str,
    length: int,
    rng: np.random.Generator,
    skeleton: SkeletonDef = HUMANML3D_SKELETON,
    fps: float = DEFAULT_FPS,
) -> SynthSample:
    if family not in _FAMILY_BUILDERS:
        raise KeyError(f"Unknown motion family: {family}")
    t = np.arange(length) / fps
    pose = _Pose(skeleton, length)
    captions = _FAMILY_BUILDERS[family](pose, t, rng)
    coords, rotmats = pose.solve()
    return SynthSample(
        motion=MotionSequence(coords, fps=fps),
        global_rotations=rotmats.astype(np.float32),
        captions=captions,
        family=family,
    )


def _assign_splits(n: int, rng: np.random.Generator) -> List[str]:
    order = rng.permutation(n)
    n_held = n // 10
    splits = ["train"] * n
    for rank, idx in enumerate(order):
        if rank < n_held:
            splits[idx] = "val"
        elif rank < 2 * n_held:
            splits[idx] = "test"
    return splits


def synth_samples(
    n_sequences: int,
    seed: int,
    skeleton: SkeletonDef = HUMANML3D_SKELETON,
) -> List[SynthSample]:
    if n_sequences < 1:
        raise ValueError(f"n_sequences must be >= 1, got {n_sequences}")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_sequences):
        length = int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1))
        samples.append(synth_sequence(FAMILIES[i % len(FAMILIES)], length, rng, skeleton))
    return samples


def synth_dataset(
    n_sequences: int,
    seed: int,
    skeleton: SkeletonDef = HUMANML3D_SKELETON,
) -> Tuple[List[MotionSequence], DatasetManifest]:
    samples = synth_samples(n_sequences, seed, skeleton)
    splits = _assign_splits(n_sequences, np.random.default_rng(seed + 1))
    entries = [
        ManifestEntry(id=f"synth_{i:05d}", motion_path=f"synth_{i:05d}.acm",
                      captions=list(s.captions), split=splits[i])
        for i, s in enumerate(samples)
    ]
    return [s.motion for s in samples], DatasetManifest(entries)
