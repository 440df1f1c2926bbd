import math
from typing import Any, Dict, Optional

import torch

from pipeline.acmdm.codec import IdentityCodec, LatentCodec
from pipeline.diffusion.samplers import Denoiser, sample
from pipeline.diffusion.schedule import NoiseSchedule, SamplerConfig


@torch.no_grad()
def generate_normalized(
    model: Denoiser,
    text: torch.Tensor,
    frames: int,
    codec: Optional[LatentCodec] = None,
    sampler: Optional[SamplerConfig] = None,
    seed: int = 0,
    model_kwargs: Optional[Dict[str, Any]] = None,
) -> torch.Tensor:
    """
    Sample a batch in diffusion space and decode it to normalized coordinates.

    `model` must expose `cfg` (an ACMDMConfig); text is [B, d_c].
    Returns [B, frames, N, 3].
    """
    codec = codec or IdentityCodec()
    cfg = model.cfg
    if cfg.in_channels != codec.channels:
        raise ValueError(f"model reads {cfg.in_channels} channels, codec {codec.name} emits {codec.channels}")
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    schedule = NoiseSchedule(kind=cfg.schedule)
    sampler = sampler or SamplerConfig.for_objective(schedule)
    shape = (text.shape[0], math.ceil(frames / codec.temporal_factor), cfg.n_joints, codec.channels)
    z = sample(model, text, sampler, schedule, shape, seed, model_kwargs=model_kwargs)
    return codec.decode_from_diffusion(z, frames=frames)
