import numpy as np
from scipy import sparse

from pipeline.mesh.topology import MeshSequence, MeshTopology


def uniform_laplacian(topology: MeshTopology) -> sparse.csr_matrix:
    """L = I - D^-1 A, so (L V)_i = V_i - mean of the neighbours of i."""
    adj = topology.adjacency
    degree = np.asarray(adj.sum(axis=1)).ravel()
    if (degree == 0).any():
        raise ValueError("mesh has isolated vertices")
    return (sparse.identity(topology.n_vertices, format="csr") - sparse.diags(1.0 / degree) @ adj).tocsr()


def laplacian_coordinates(vertices: np.ndarray, laplacian: sparse.csr_matrix) -> np.ndarray:
    """[N, 3] or [L, N, 3] vertices -> differential coordinates of the same shape."""
    if vertices.ndim == 2:
        return laplacian @ vertices
    return np.stack([laplacian @ frame for frame in vertices])


def lsd(m: MeshSequence, tpose: np.ndarray, topology: MeshTopology) -> float:
    """Mean over frames and vertices of |Lap(V_frame)_i - Lap(V_tpose)_i|."""
    if m.topology is not topology and not np.array_equal(m.topology.faces, topology.faces):
        raise ValueError(
            f"mesh topology ({m.topology.n_vertices} vertices, {len(m.topology.faces)} faces) does not "
            f"match the reference ({topology.n_vertices} vertices, {len(topology.faces)} faces)"
        )
    if tpose.shape != (topology.n_vertices, 3):
        raise ValueError(f"tpose must be ({topology.n_vertices}, 3), got {tpose.shape}")
    lap = uniform_laplacian(topology)
    ref = laplacian_coordinates(tpose.astype(np.float64), lap)
    frames = laplacian_coordinates(m.coords.astype(np.float64), lap)
    return float(np.linalg.norm(frames - ref[None], axis=-1).mean())
