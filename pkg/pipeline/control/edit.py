import math
from typing import Optional, Union

import numpy as np
import torch

from pipeline.acmdm.codec import IdentityCodec, LatentCodec
from pipeline.acmdm.generate import generate_normalized
from pipeline.control.model import ControlledDenoiser, ControlNetState
from pipeline.control.spec import ControlSpec, encode_control, upper_body_spec
from pipeline.diffusion.schedule import NoiseSchedule, SamplerConfig
from pipeline.motion_data.motion import MotionSequence, NormalizationStats, TextPrompt
from pipeline.motion_data.normalization import denormalize_array
from services.text_encoder import TextEncoderInterface, encode_text

CONTROL_CFG_SCALE = 2.5


@torch.no_grad()
def controlled_sample(
    state: ControlNetState,
    text: np.ndarray,
    spec: ControlSpec,
    frames: int,
    stats: NormalizationStats,
    codec: Optional[LatentCodec] = None,
    sampler: Optional[SamplerConfig] = None,
    seed: int = 0,
    fps: float = 20.0,
) -> MotionSequence:
    """Sample one motion of `frames` frames under keyframe constraints; returned in meters."""
    codec = codec or IdentityCodec()
    main = state.frozen_main
    n_joints = main.cfg.n_joints
    spec.validate(frames, n_joints)
    schedule = NoiseSchedule(kind=main.cfg.schedule)
    sampler = sampler or SamplerConfig.for_objective(schedule, cfg_scale=CONTROL_CFG_SCALE)

    padded = math.ceil(frames / codec.temporal_factor) * codec.temporal_factor
    grid = encode_control(spec, padded, n_joints, stats)
    feats = state.branch.encoder(torch.from_numpy(grid.stacked()).unsqueeze(0))
    coords = generate_normalized(
        ControlledDenoiser(state),
        torch.from_numpy(np.asarray(text, dtype=np.float32)).unsqueeze(0),
        frames,
        codec=codec,
        sampler=sampler,
        seed=seed,
        model_kwargs={"ctrl_feats": feats},
    )[0].cpu().numpy()
    return MotionSequence(denormalize_array(coords, stats), fps=fps)


def upper_body_edit(
    source: MotionSequence,
    prompt: Union[str, TextPrompt],
    state: ControlNetState,
    text_encoder: TextEncoderInterface,
    stats: NormalizationStats,
    codec: Optional[LatentCodec] = None,
    sampler: Optional[SamplerConfig] = None,
    seed: int = 0,
    max_frames: int = 196,
) -> MotionSequence:
    """Keep the source's pelvis and feet on every frame, regenerate the rest from `prompt`."""
    if source.frames > max_frames:
        raise ValueError(f"source has {source.frames} frames, more than the model maximum {max_frames}")
    spec = upper_body_spec(source)
    return controlled_sample(
        state, encode_text(text_encoder, prompt), spec, source.frames, stats,
        codec=codec, sampler=sampler, seed=seed, fps=source.fps,
    )
