"""
Synthetic humanoid surface for mesh-mode experiments.

One latitude/longitude ellipsoid is placed along every bone of the rest
skeleton; bridge triangles stitch each ellipsoid to its parent bone's so the
surface is one connected component. Vertices are rigidly bound to the bone's
parent joint and follow it through the synthetic corpus.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from pipeline.mesh.topology import N_LATENT_VERTICES, MeshSequence, MeshTopology
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON, SkeletonDef
from pipeline.motion_data.synthetic import SynthSample, synth_samples

N_RINGS = 4
N_SEGMENTS = 6
VERTS_PER_BONE = 2 + N_RINGS * N_SEGMENTS
BONE_RADIUS = 0.05


@dataclass
class SkinBinding:
    """Rigid skinning: each vertex follows one joint with a fixed offset in its frame."""
    joint: np.ndarray   # [N]
    local: np.ndarray   # [N, 3] rest offset from that joint


def _frame(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to `direction` and to each other."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(direction[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(direction, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(direction, u)


def _ellipsoid(start: np.ndarray, end: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices (start pole, rings, end pole) and faces of a capsule-like ellipsoid."""
    axis = end - start
    length = np.linalg.norm(axis)
    d = axis / length
    u, w = _frame(d)
    center = (start + end) / 2.0
    half = length / 2.0 + 0.02
    verts = [center - half * d]
    for r in range(1, N_RINGS + 1):
        theta = np.pi * r / (N_RINGS + 1)
        along, across = -np.cos(theta) * half, np.sin(theta) * radius
        for s in range(N_SEGMENTS):
            phi = 2.0 * np.pi * s / N_SEGMENTS
            verts.append(center + along * d + across * (np.cos(phi) * u + np.sin(phi) * w))
    verts.append(center + half * d)

    def ring(r: int, s: int) -> int:
        return 1 + r * N_SEGMENTS + s % N_SEGMENTS

    last = len(verts) - 1
    faces = []
    for s in range(N_SEGMENTS):
        faces.append([0, ring(0, s + 1), ring(0, s)])
        faces.append([last, ring(N_RINGS - 1, s), ring(N_RINGS - 1, s + 1)])
        for r in range(N_RINGS - 1):
            a, b = ring(r, s), ring(r, s + 1)
            c, e = ring(r + 1, s), ring(r + 1, s + 1)
            faces += [[a, b, e], [a, e, c]]
    return np.asarray(verts), np.asarray(faces, dtype=np.int64)


def synthetic_humanoid_mesh(
    skeleton: SkeletonDef = HUMANML3D_SKELETON,
    n_clusters: int = N_LATENT_VERTICES,
    seed: int = 0,
) -> Tuple[MeshTopology, SkinBinding]:
    rest = skeleton.rest_pose()
    bones = skeleton.bones
    verts, faces, joints = [], [], []
    bone_of_child = {}
    for b, (p, j) in enumerate(bones):
        v, f = _ellipsoid(rest[p], rest[j], BONE_RADIUS)
        faces.append(f + b * VERTS_PER_BONE)
        verts.append(v)
        joints.append(np.full(len(v), p))
        bone_of_child[j] = b

    bridges = []
    root_bone = next(b for b, (p, _) in enumerate(bones) if p == 0)
    for b, (p, _) in enumerate(bones):
        if b == root_bone:
            continue
        parent_bone = bone_of_child.get(p, root_bone)
        child_pole = b * VERTS_PER_BONE
        base = parent_bone * VERTS_PER_BONE
        if p in bone_of_child:
            parent_pole, parent_ring = base + VERTS_PER_BONE - 1, base + 1 + (N_RINGS - 1) * N_SEGMENTS
        else:
            parent_pole, parent_ring = base, base + 1
        bridges.append([child_pole, parent_pole, parent_ring])

    vertices = np.concatenate(verts)
    all_faces = np.concatenate(faces + [np.asarray(bridges, dtype=np.int64)])
    joint = np.concatenate(joints).astype(np.int64)
    topology = MeshTopology.from_mesh(vertices, all_faces, n_clusters=n_clusters, seed=seed)
    return topology, SkinBinding(joint=joint, local=vertices - rest[joint])


def skin(binding: SkinBinding, coords: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Joint positions [L, J, 3] and global rotations [L, J, 3, 3] -> vertices [L, N, 3]."""
    r = rotations[:, binding.joint]                       # [L, N, 3, 3]
    offsets = np.einsum("lnij,nj->lni", r, binding.local)
    return (coords[:, binding.joint] + offsets).astype(np.float32)


def mesh_corpus(
    n_sequences: int,
    seed: int,
    n_clusters: int = N_LATENT_VERTICES,
) -> Tuple[List[MeshSequence], List[List[str]], MeshTopology]:
    """Skin the synthetic motion corpus onto the synthetic humanoid."""
    topology, binding = synthetic_humanoid_mesh(n_clusters=n_clusters, seed=seed)
    samples: List[SynthSample] = synth_samples(n_sequences, seed)
    meshes = [
        MeshSequence(skin(binding, s.motion.coords, s.global_rotations), topology, fps=s.motion.fps)
        for s in samples
    ]
    return meshes, [list(s.captions) for s in samples], topology
