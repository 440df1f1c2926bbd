from pipeline.mesh.config import MeshAEConfig, MeshAETrainConfig
from pipeline.mesh.laplacian import lsd, uniform_laplacian
from pipeline.mesh.model import MeshAutoEncoder, MeshLatent
from pipeline.mesh.synthetic import mesh_corpus, synthetic_humanoid_mesh
from pipeline.mesh.topology import N_LATENT_VERTICES, MeshSequence, MeshTopology
