from typing import Optional, Union

import numpy as np
import torch

from pipeline.acmdm.generate import generate_normalized
from pipeline.acmdm.model import ACMDM
from pipeline.diffusion.schedule import NoiseSchedule, SamplerConfig
from pipeline.mesh.model import MeshAutoEncoder
from pipeline.mesh.topology import MeshSequence, MeshTopology
from pipeline.motion_data.motion import NormalizationStats, TextPrompt
from pipeline.motion_data.normalization import denormalize_array
from services.text_encoder import TextEncoderInterface, encode_text

MESH_CFG_SCALE = 4.5


@torch.no_grad()
def mesh_generate(
    prompt: Union[str, TextPrompt],
    model: ACMDM,
    mesh_ae: MeshAutoEncoder,
    text_encoder: TextEncoderInterface,
    stats: NormalizationStats,
    topology: MeshTopology,
    frames: int = 60,
    sampler: Optional[SamplerConfig] = None,
    seed: int = 0,
    fps: float = 20.0,
) -> MeshSequence:
    """Text-conditioned vertex motion: sample (L, n_v, d_v) latents, decode, return meters."""
    if model.cfg.n_joints != mesh_ae.cfg.n_latent:
        raise ValueError(
            f"model spans {model.cfg.n_joints} spatial slots, mesh AE has {mesh_ae.cfg.n_latent} clusters"
        )
    sampler = sampler or SamplerConfig.for_objective(NoiseSchedule(kind=model.cfg.schedule),
                                                     cfg_scale=MESH_CFG_SCALE)
    text = torch.from_numpy(encode_text(text_encoder, prompt).astype(np.float32)).unsqueeze(0)
    coords = generate_normalized(model, text, frames, codec=mesh_ae, sampler=sampler, seed=seed)
    return MeshSequence(denormalize_array(coords[0].cpu().numpy(), stats), topology, fps=fps)
