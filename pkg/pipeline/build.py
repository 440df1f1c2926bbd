"""
High-level pipeline that wires checkpoints, samplers and decoders.

This module defines the ACMDMPipeline class: text-to-motion generation,
keyframe-controlled generation, upper-body editing and text-to-mesh
generation, all returning absolute coordinates in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from loaders.registry import LoaderRegistry
from pipeline.acmdm.generate import generate_normalized
from pipeline.bundles import ModelBundle
from pipeline.control.edit import controlled_sample, upper_body_edit
from pipeline.control.spec import ControlSpec
from pipeline.diffusion.schedule import NoiseSchedule, SamplerConfig
from pipeline.mesh.generate import mesh_generate
from pipeline.mesh.topology import MeshSequence, MeshTopology
from pipeline.motion_data.motion import DEFAULT_FPS, MotionSequence, NormalizationStats, TextPrompt
from pipeline.motion_data.normalization import denormalize_array
from services.text_encoder import encode_batch, encode_text


@dataclass
class SamplingSettings:
    steps: int = 50
    cfg_text: float = 3.0
    cfg_control: float = 2.5
    cfg_mesh: float = 4.5
    max_frames: int = 196

    @classmethod
    def from_config(cls, section: Dict, **overrides) -> "SamplingSettings":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def group_seed(seed: int, frames: int) -> int:
    """Seed of the batch holding every request of one length."""
    return int(np.random.SeedSequence([seed, frames]).generate_state(1)[0])


class ACMDMPipeline:
    """Generate motions from prompts with the trained modules in one bundle."""

    def __init__(self, bundle: ModelBundle, sampling: Optional[SamplingSettings] = None, fps: float = DEFAULT_FPS):
        self.bundle = bundle
        self.sampling = sampling or SamplingSettings()
        self.fps = fps

    @classmethod
    def from_registry(cls, loaders: Optional[LoaderRegistry] = None,
                      sampling: Optional[SamplingSettings] = None) -> "ACMDMPipeline":
        return cls(ModelBundle.from_registry(loaders or LoaderRegistry()), sampling)

    # ------------- capabilities -----------------
    @property
    def stats(self) -> NormalizationStats:
        return self.bundle.stats

    @property
    def has_control(self) -> bool:
        return self.bundle.control is not None

    @property
    def has_mesh(self) -> bool:
        return self.bundle.mesh is not None

    @property
    def mesh_topology(self) -> MeshTopology:
        return self._mesh().topology

    @property
    def mesh_tpose(self) -> np.ndarray:
        return self._mesh().tpose

    def sampler(self, cfg_scale: float, steps: Optional[int] = None) -> SamplerConfig:
        schedule = NoiseSchedule(kind=self.bundle.model.cfg.schedule)
        return SamplerConfig.for_objective(schedule, steps=steps or self.sampling.steps, cfg_scale=cfg_scale)

    def _check_frames(self, frames: int) -> None:
        if not 1 <= frames <= self.sampling.max_frames:
            raise ValueError(f"frames must be in [1, {self.sampling.max_frames}], got {frames}")

    def _mesh(self):
        if self.bundle.mesh is None:
            raise ValueError("no mesh model loaded (train-mesh-ae and a mesh denoiser are required)")
        return self.bundle.mesh

    # ------------- text to motion -----------------
    def _sample(self, prompts: Sequence[Union[str, TextPrompt]], frames: int, seed: int,
                sampler: SamplerConfig) -> List[MotionSequence]:
        text = encode_batch(self.bundle.text_encoder, prompts)
        coords = generate_normalized(self.bundle.model, text, frames, codec=self.bundle.codec,
                                     sampler=sampler, seed=seed).cpu().numpy()
        return [MotionSequence(denormalize_array(c, self.stats), fps=self.fps) for c in coords]

    def generate(self, prompt: Union[str, TextPrompt], frames: int = 120, seed: int = 0,
                 cfg_scale: Optional[float] = None, steps: Optional[int] = None) -> MotionSequence:
        self._check_frames(frames)
        sampler = self.sampler(self.sampling.cfg_text if cfg_scale is None else cfg_scale, steps)
        return self._sample([prompt], frames, seed, sampler)[0]

    def generate_batch(self, prompts: Sequence[Union[str, TextPrompt]], frames: Sequence[int],
                       seed: int = 0) -> List[MotionSequence]:
        """Requests of equal length share one sampling batch; output keeps request order."""
        if len(prompts) != len(frames):
            raise ValueError(f"{len(prompts)} prompts for {len(frames)} lengths")
        sampler = self.sampler(self.sampling.cfg_text)
        out: List[Optional[MotionSequence]] = [None] * len(prompts)
        for length in sorted(set(frames)):
            self._check_frames(length)
            idx = [i for i, f in enumerate(frames) if f == length]
            for i, m in zip(idx, self._sample([prompts[i] for i in idx], length, group_seed(seed, length), sampler)):
                out[i] = m
        return out

    # ------------- control and editing -----------------
    def generate_controlled(self, prompt: Union[str, TextPrompt], spec: ControlSpec, frames: int,
                            seed: int = 0, cfg_scale: Optional[float] = None,
                            steps: Optional[int] = None) -> MotionSequence:
        if self.bundle.control is None:
            raise ValueError("no ControlNet loaded (run train-controlnet first)")
        self._check_frames(frames)
        sampler = self.sampler(self.sampling.cfg_control if cfg_scale is None else cfg_scale, steps)
        return controlled_sample(
            self.bundle.control, encode_text(self.bundle.text_encoder, prompt), spec, frames, self.stats,
            codec=self.bundle.codec, sampler=sampler, seed=seed, fps=self.fps,
        )

    def edit(self, source: MotionSequence, prompt: Union[str, TextPrompt], seed: int = 0,
             cfg_scale: Optional[float] = None, steps: Optional[int] = None) -> MotionSequence:
        if self.bundle.control is None:
            raise ValueError("no ControlNet loaded (run train-controlnet first)")
        sampler = self.sampler(self.sampling.cfg_control if cfg_scale is None else cfg_scale, steps)
        return upper_body_edit(
            source, prompt, self.bundle.control, self.bundle.text_encoder, self.stats,
            codec=self.bundle.codec, sampler=sampler, seed=seed, max_frames=self.sampling.max_frames,
        )

    # ------------- mesh -----------------
    def generate_mesh(self, prompt: Union[str, TextPrompt], frames: int = 60, seed: int = 0,
                      cfg_scale: Optional[float] = None, steps: Optional[int] = None) -> MeshSequence:
        mesh = self._mesh()
        self._check_frames(frames)
        schedule = NoiseSchedule(kind=mesh.model.cfg.schedule)
        sampler = SamplerConfig.for_objective(
            schedule, steps=steps or self.sampling.steps,
            cfg_scale=self.sampling.cfg_mesh if cfg_scale is None else cfg_scale,
        )
        return mesh_generate(prompt, mesh.model, mesh.mesh_ae, mesh.text_encoder, mesh.stats, mesh.topology,
                             frames=frames, sampler=sampler, seed=seed, fps=self.fps)
