import numpy as np
import pytest
import torch

from pipeline.acmdm.config import build_model
from pipeline.acmdm.model import ACMDM
from pipeline.diffusion.schedule import SamplerConfig
from pipeline.mesh.config import MeshAEConfig, MeshAETrainConfig
from pipeline.mesh.generate import mesh_generate
from pipeline.mesh.laplacian import lsd, uniform_laplacian
from pipeline.mesh.model import MeshAutoEncoder
from pipeline.mesh.synthetic import VERTS_PER_BONE, mesh_corpus, synthetic_humanoid_mesh
from pipeline.mesh.topology import N_LATENT_VERTICES, MeshSequence, MeshTopology, farthest_point_clusters
from pipeline.mesh.train import mesh_ae_checkpoint, mesh_ae_from_checkpoint, mesh_stats, normalize_meshes, train_mesh_ae
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON


@pytest.fixture(scope="module")
def humanoid():
    return synthetic_humanoid_mesh()


def test_humanoid_topology(humanoid):
    topology, binding = humanoid
    n_bones = len(HUMANML3D_SKELETON.bones)
    assert topology.n_vertices == n_bones * VERTS_PER_BONE, f"{topology.n_vertices} vertices"
    assert topology.n_clusters == N_LATENT_VERTICES, f"{topology.n_clusters} clusters"
    assert binding.joint.shape == (topology.n_vertices,)


def test_disconnected_mesh_rejected():
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    with pytest.raises(ValueError, match="connected components"):
        MeshTopology.from_mesh(vertices, faces, n_clusters=2)


def test_farthest_point_clusters():
    vertices = np.random.default_rng(0).standard_normal((60, 3))
    a = farthest_point_clusters(vertices, 5, seed=1)
    assert np.array_equal(a, farthest_point_clusters(vertices, 5, seed=1)), "clustering is not deterministic"
    assert sorted(np.unique(a).tolist()) == list(range(5)), f"cluster ids {np.unique(a)}"
    with pytest.raises(ValueError):
        farthest_point_clusters(vertices, 61)


def test_laplacian_annihilates_constants(humanoid):
    topology, _ = humanoid
    lap = uniform_laplacian(topology)
    assert np.allclose(lap @ np.ones(topology.n_vertices), 0.0), "rows of I - D^-1 A must sum to zero"


def test_lsd_of_rest_pose_is_zero(humanoid):
    topology, _ = humanoid
    rest = MeshSequence(np.repeat(topology.vertices[None], 3, axis=0), topology)
    assert lsd(rest, topology.vertices, topology) == 0.0
    shifted = MeshSequence(rest.coords + np.array([1.0, 0.0, -2.0]), topology)
    assert lsd(shifted, topology.vertices, topology) < 1e-9, "translation changed differential coordinates"
    scaled = MeshSequence(rest.coords * 1.5, topology)
    assert lsd(scaled, topology.vertices, topology) > 0.0


def _dense_lsd(coords, tpose, faces):
    n = len(tpose)
    adj = np.zeros((n, n))
    for face in faces:
        for i in face:
            for j in face:
                if i != j:
                    adj[i, j] = 1.0
    lap = np.eye(n) - adj / adj.sum(axis=1, keepdims=True)
    ref = lap @ tpose
    return float(np.mean([np.linalg.norm(lap @ frame - ref, axis=1).mean() for frame in coords]))


def test_lsd_matches_dense_computation(humanoid):
    topology, _ = humanoid
    rng = np.random.default_rng(0)
    coords = topology.vertices[None] + 0.01 * rng.standard_normal((3, topology.n_vertices, 3))
    got = lsd(MeshSequence(coords, topology), topology.vertices, topology)
    expected = _dense_lsd(coords, topology.vertices, topology.faces)
    assert got > 0.0
    assert abs(got - expected) < 1e-8, f"sparse {got} vs dense {expected}"


def test_lsd_rejects_other_topology(humanoid):
    topology, _ = humanoid
    tetra = MeshTopology.from_mesh(np.eye(4, 3), np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]), n_clusters=2)
    m = MeshSequence(tetra.vertices[None], tetra)
    with pytest.raises(ValueError, match="does not match"):
        lsd(m, topology.vertices, topology)


def test_mesh_corpus_follows_skeleton():
    meshes, captions, topology = mesh_corpus(2, seed=0)
    assert len(meshes) == len(captions) == 2
    for m in meshes:
        assert m.coords.shape[1:] == (topology.n_vertices, 3), f"mesh shape {m.coords.shape}"


def test_cluster_pool_weights(humanoid):
    topology, _ = humanoid
    model = MeshAutoEncoder(topology)
    w = model.pool.weights()
    assert torch.allclose(w.sum(dim=-1), torch.ones_like(w.sum(dim=-1))), "pool weights must sum to 1"
    assert not (w * (~model.pool.member)).any(), "a cluster pooled vertices it does not own"


def test_mesh_ae_shapes(humanoid):
    topology, _ = humanoid
    model = MeshAutoEncoder(topology, MeshAEConfig(latent_dim=8)).eval()
    x = torch.randn(2, 5, topology.n_vertices, 3)
    z = model.encode(x)
    assert z.shape == (2, 5, N_LATENT_VERTICES, 8), f"latent {tuple(z.shape)}"
    assert model(x).shape == x.shape
    with pytest.raises(ValueError):
        MeshAutoEncoder(topology, MeshAEConfig(n_latent=12))


def test_train_mesh_ae_and_generate(text_encoder):
    meshes, captions, topology = mesh_corpus(3, seed=1)
    stats = mesh_stats(meshes)
    normalized = normalize_meshes(meshes, stats)
    hyper = MeshAETrainConfig(batch_size=2, window=4, epochs=1, steps_per_epoch=2,
                              warmup_steps=1, decay_step=10)
    model, history = train_mesh_ae(normalized, topology, MeshAEConfig(hidden_dim=16), hyper, progress=False)
    assert len(history) == 2 and np.isfinite(history["loss"]).all()

    restored, topo = mesh_ae_from_checkpoint(mesh_ae_checkpoint(model, topology, stats))
    assert np.array_equal(topo.faces, topology.faces)
    x = torch.from_numpy(normalized[0].coords[:3]).unsqueeze(0)
    with torch.no_grad():
        assert torch.allclose(restored(x), model(x)), "mesh AE changed on reload"

    denoiser = ACMDM(build_model("tiny", patch=2, d_in=model.channels, n_joints=N_LATENT_VERTICES)).eval()
    out = mesh_generate("a person jumps", denoiser, model, text_encoder, stats, topology, frames=6,
                        sampler=SamplerConfig(steps=2))
    assert out.coords.shape == (6, topology.n_vertices, 3), f"generated mesh {out.coords.shape}"
