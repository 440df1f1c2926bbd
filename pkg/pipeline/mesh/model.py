"""
Spatial mesh autoencoder: [B, L, N_v, 3] <-> [B, L, n_v, d_v].

Encoding pools each cluster with learned softmax weights (one set per head),
then maps the pooled positions through a shared MLP. Decoding expands each
cluster code with an MLP and lets every vertex read its cluster's code through
a learned per-vertex basis. Frames are processed independently.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from pipeline.mesh.config import MeshAEConfig
from pipeline.mesh.topology import MeshSequence, MeshTopology


@dataclass
class MeshLatent:
    latent: np.ndarray  # [L, n_v, d_v]

    def __post_init__(self):
        if self.latent.ndim != 3:
            raise ValueError(f"mesh latent must be [L, n_v, d_v], got {self.latent.shape}")


class ClusterPool(nn.Module):
    """Per-head softmax-weighted mean over each cluster's member vertices."""

    def __init__(self, clusters: torch.Tensor, n_clusters: int, heads: int):
        super().__init__()
        member = F.one_hot(clusters, n_clusters).T.bool()          # [n_v, N]
        self.register_buffer("member", member)
        self.logits = nn.Parameter(torch.zeros(heads, *member.shape))

    def weights(self) -> torch.Tensor:
        masked = self.logits.masked_fill(~self.member, float("-inf"))
        return torch.softmax(masked, dim=-1)                       # [H, n_v, N]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[B, L, N, 3] -> [B, L, n_v, H * 3]."""
        pooled = torch.einsum("hcn,blnd->blchd", self.weights(), x)
        return pooled.flatten(-2)


class MeshAutoEncoder(nn.Module):
    name = "mesh_ae"
    temporal_factor = 1

    def __init__(self, topology: MeshTopology, cfg: Optional[MeshAEConfig] = None):
        super().__init__()
        cfg = cfg or MeshAEConfig()
        if topology.n_clusters != cfg.n_latent:
            raise ValueError(f"topology has {topology.n_clusters} clusters, config expects {cfg.n_latent}")
        self.cfg = cfg
        self.n_vertices = topology.n_vertices
        clusters = torch.from_numpy(topology.clusters.astype(np.int64))
        self.register_buffer("clusters", clusters)
        h = cfg.hidden_dim
        self.pool = ClusterPool(clusters, cfg.n_latent, cfg.pool_heads)
        self.enc_mlp = nn.Sequential(nn.Linear(3 * cfg.pool_heads, h), nn.SiLU(), nn.Linear(h, cfg.latent_dim))
        self.dec_mlp = nn.Sequential(nn.Linear(cfg.latent_dim, h), nn.SiLU(), nn.Linear(h, h))
        self.center = nn.Linear(h, 3)
        generator = torch.Generator().manual_seed(cfg.seed)
        self.basis = nn.Parameter(torch.randn(self.n_vertices, h, 3, generator=generator) * 0.01)
        self.vertex_bias = nn.Parameter(torch.zeros(self.n_vertices, 3))
        self.register_buffer("latent_mean", torch.zeros(cfg.latent_dim))
        self.register_buffer("latent_std", torch.ones(cfg.latent_dim))

    @property
    def channels(self) -> int:
        return self.cfg.latent_dim

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[2] != self.n_vertices or x.shape[-1] != 3:
            raise ValueError(f"expected [B, L, {self.n_vertices}, 3], got {tuple(x.shape)}")
        return self.enc_mlp(self.pool(x))

    def decode(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        if z.ndim != 4 or z.shape[2] != self.cfg.n_latent or z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(
                f"expected [B, L, {self.cfg.n_latent}, {self.cfg.latent_dim}], got {tuple(z.shape)}"
            )
        code = self.dec_mlp(z)[:, :, self.clusters]                # [B, L, N, h]
        out = self.center(code) + torch.einsum("blnh,nhd->blnd", code, self.basis) + self.vertex_bias
        return out if frames is None else out[:, :frames]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))

    # -- latent statistics / diffusion codec ---------------------------------
    def set_latent_stats(self, mean: torch.Tensor, std: torch.Tensor) -> None:
        self.latent_mean.copy_(mean)
        self.latent_std.copy_(std.clamp_min(1e-6))

    def encode_for_diffusion(self, x: torch.Tensor) -> torch.Tensor:
        return (self.encode(x) - self.latent_mean) / self.latent_std

    def decode_from_diffusion(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        return self.decode(z * self.latent_std + self.latent_mean, frames=frames)

    # -- single-sequence helpers ---------------------------------------------
    @torch.no_grad()
    def encode_mesh(self, m: MeshSequence) -> MeshLatent:
        """`m` must already be normalized."""
        if m.topology.n_vertices != self.n_vertices:
            raise ValueError(f"mesh has {m.topology.n_vertices} vertices, model expects {self.n_vertices}")
        x = torch.from_numpy(m.coords.astype(np.float32)).unsqueeze(0)
        return MeshLatent(self.encode(x)[0].cpu().numpy())

    @torch.no_grad()
    def decode_mesh(self, z: MeshLatent, topology: MeshTopology, fps: float = 20.0) -> MeshSequence:
        out = self.decode(torch.from_numpy(z.latent.astype(np.float32)).unsqueeze(0))[0]
        return MeshSequence(out.cpu().numpy(), topology, fps=fps)
