"""
Mesh connectivity, vertex clustering and vertex-sequence containers.
"""
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from data_handler import load_obj_topology

N_LATENT_VERTICES = 28


def farthest_point_clusters(vertices: np.ndarray, n_clusters: int, seed: int = 0) -> np.ndarray:
    """
    Seed `n_clusters` vertices by farthest-point sampling from a random start,
    then assign every vertex to its nearest seed. Deterministic under seed.
    """
    n = len(vertices)
    if not 1 <= n_clusters <= n:
        raise ValueError(f"cannot form {n_clusters} clusters from {n} vertices")
    rng = np.random.default_rng(seed)
    seeds = [int(rng.integers(n))]
    dist = np.linalg.norm(vertices - vertices[seeds[0]], axis=1)
    for _ in range(n_clusters - 1):
        nxt = int(np.argmax(dist))
        seeds.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(vertices - vertices[nxt], axis=1))
    # ties go to the lowest seed index, so every seed owns itself
    return np.argmin(cdist(vertices, vertices[seeds]), axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class MeshTopology:
    vertices: np.ndarray   # [N, 3] rest (T) pose, meters
    faces: np.ndarray      # [F, 3] zero-based
    clusters: np.ndarray   # [N] cluster id per vertex

    def __post_init__(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be [N, 3], got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError(f"faces must be [F, 3], got {self.faces.shape}")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            raise ValueError(f"faces reference vertices outside [0, {self.n_vertices})")
        if self.clusters.shape != (self.n_vertices,):
            raise ValueError(f"{self.clusters.shape[0]} cluster ids for {self.n_vertices} vertices")
        used = np.unique(self.clusters)
        if used[0] != 0 or used[-1] != len(used) - 1:
            raise ValueError("cluster ids must cover 0..n_clusters-1 without gaps")
        n_parts, _ = connected_components(self.adjacency, directed=False)
        if n_parts != 1:
            raise ValueError(f"mesh adjacency has {n_parts} connected components, expected 1")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_clusters(self) -> int:
        return int(self.clusters.max()) + 1

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric binary vertex adjacency from face edges."""
        f = self.faces
        rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2], f[:, 1], f[:, 2], f[:, 0]])
        cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0], f[:, 0], f[:, 1], f[:, 2]])
        adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)),
                                shape=(self.n_vertices, self.n_vertices)).tocsr()
        adj.data[:] = 1.0
        return adj

    @classmethod
    def from_mesh(cls, vertices: np.ndarray, faces: np.ndarray,
                  n_clusters: int = N_LATENT_VERTICES, seed: int = 0) -> "MeshTopology":
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        return cls(vertices, faces, farthest_point_clusters(vertices, n_clusters, seed))

    @classmethod
    def from_obj(cls, path: Union[str, Path], n_clusters: int = N_LATENT_VERTICES,
                 seed: int = 0) -> "MeshTopology":
        vertices, faces = load_obj_topology(path)
        return cls.from_mesh(vertices, faces, n_clusters, seed)


@dataclass
class MeshSequence:
    """Absolute world-frame vertex positions [L, N_v, 3] on a fixed topology."""
    coords: np.ndarray
    topology: MeshTopology
    fps: float = 20.0

    def __post_init__(self):
        # float64 input is kept so differential metrics stay exact
        coords = np.asarray(self.coords)
        self.coords = coords if coords.dtype == np.float64 else coords.astype(np.float32)
        if self.coords.ndim != 3 or self.coords.shape[-1] != 3 or self.coords.shape[0] < 1:
            raise ValueError(f"mesh coords must be [L, N, 3] with L >= 1, got {self.coords.shape}")
        if self.coords.shape[1] != self.topology.n_vertices:
            raise ValueError(
                f"{self.coords.shape[1]} vertices for a topology of {self.topology.n_vertices}"
            )
        if not np.isfinite(self.coords).all():
            raise ValueError("mesh contains non-finite coordinates")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]
