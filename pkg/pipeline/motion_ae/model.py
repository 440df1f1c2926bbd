"""
2D convolutional motion autoencoder over the (time x joint) grid.

Tensors are laid out [B, C, L, J] internally and [B, L, J, C] at the
boundary. Only the time axis is ever strided; the joint axis keeps N_j.
No normalization layers, so causal padding alone decides what the encoder
can see.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from pipeline.motion_ae.config import AEConfig
from pipeline.motion_data.motion import MotionSequence


@dataclass
class LatentMotion:
    """Per-joint latent [l, N_j, d_j] for a motion of source_frames frames."""
    latent: np.ndarray
    source_frames: int

    def __post_init__(self):
        if self.latent.ndim != 3:
            raise ValueError(f"latent must be [l, J, d], got {self.latent.shape}")


@dataclass
class EncoderOutput:
    latent: torch.Tensor                    # [B, l, J, d]
    mean: Optional[torch.Tensor] = None
    logvar: Optional[torch.Tensor] = None


class GridConv(nn.Module):
    """3x3 conv; causal mode pads the time axis on the left only."""

    def __init__(self, in_ch: int, out_ch: int, causal: bool, stride_t: int = 1, kernel: int = 3):
        super().__init__()
        self.causal = causal
        self.kernel = kernel
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size=kernel, stride=(stride_t, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        k = self.kernel - 1
        time_pad = (k, 0) if self.causal else (k // 2, k - k // 2)
        x = F.pad(x, (k // 2, k - k // 2) + time_pad)
        return self.conv(x)


class ResLayer(nn.Module):
    def __init__(self, dim: int, causal: bool):
        super().__init__()
        self.conv1 = GridConv(dim, dim, causal)
        self.conv2 = GridConv(dim, dim, causal)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.silu(self.conv1(F.silu(x))))


class Encoder(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        h = cfg.hidden_dim
        out_ch = cfg.latent_channels * (2 if cfg.variational else 1)
        layers = [GridConv(cfg.in_channels, h, cfg.causal)]
        for b in range(cfg.n_blocks):
            layers += [ResLayer(h, cfg.causal) for _ in range(cfg.layers_per_block - 1)]
            if b < cfg.n_downsample_blocks:
                layers.append(GridConv(h, h, cfg.causal, stride_t=2))
            else:
                layers.append(ResLayer(h, cfg.causal))
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(h, out_ch, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(F.silu(self.body(x)))


class Decoder(nn.Module):
    """Nearest-neighbour temporal upsampling followed by conv refinement (non-causal)."""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        h = cfg.hidden_dim
        layers = [GridConv(cfg.latent_channels, h, causal=False)]
        for b in reversed(range(cfg.n_blocks)):
            layers += [ResLayer(h, causal=False) for _ in range(cfg.layers_per_block - 1)]
            if b < cfg.n_downsample_blocks:
                layers += [nn.Upsample(scale_factor=(2, 1), mode="nearest"), GridConv(h, h, causal=False)]
            else:
                layers.append(ResLayer(h, causal=False))
        self.body = nn.Sequential(*layers)
        self.head = GridConv(h, cfg.in_channels, causal=False)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.head(F.silu(self.body(z)))


class MotionAutoEncoder(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        # z-normalization of latents for diffusion, filled after AE training
        self.register_buffer("latent_mean", torch.zeros(cfg.latent_channels))
        self.register_buffer("latent_std", torch.ones(cfg.latent_channels))

    def latent_frames(self, frames: int) -> int:
        return -(-frames // self.cfg.temporal_downsample)

    def encode(self, x: torch.Tensor, noise_scale: float = 1.0,
               generator: Optional[torch.Generator] = None) -> EncoderOutput:
        """
        x: normalized motion [B, L, J, C]. With a variational config the latent
        is mean + noise_scale * std * eps; noise_scale=0 returns the mean.
        """
        if x.shape[1] < self.cfg.temporal_downsample:
            raise ValueError(
                f"motion has {x.shape[1]} frames, fewer than the downsample factor "
                f"{self.cfg.temporal_downsample}"
            )
        h = self.encoder(x.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        if not self.cfg.variational:
            return EncoderOutput(latent=h)
        mean, logvar = h.chunk(2, dim=-1)
        logvar = logvar.clamp(-30.0, 20.0)
        eps = torch.randn(mean.shape, generator=generator, device=mean.device, dtype=mean.dtype)
        latent = mean + noise_scale * torch.exp(0.5 * logvar) * eps
        return EncoderOutput(latent=latent, mean=mean, logvar=logvar)

    def decode(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        """z: [B, l, J, d] -> normalized motion [B, l*4, J, C], truncated to `frames`."""
        if z.ndim != 4 or z.shape[-1] != self.cfg.latent_channels:
            raise ValueError(f"latent must be [B, l, J, {self.cfg.latent_channels}], got {tuple(z.shape)}")
        out = self.decoder(z.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        return out if frames is None else out[:, :frames]

    def forward(self, x: torch.Tensor):
        enc = self.encode(x)
        return self.decode(enc.latent, frames=x.shape[1]), enc

    # -- latent statistics ---------------------------------------------------
    def set_latent_stats(self, mean: torch.Tensor, std: torch.Tensor) -> None:
        self.latent_mean.copy_(mean)
        self.latent_std.copy_(std.clamp_min(1e-6))

    def normalize_latent(self, z: torch.Tensor) -> torch.Tensor:
        return (z - self.latent_mean) / self.latent_std

    def denormalize_latent(self, z: torch.Tensor) -> torch.Tensor:
        return z * self.latent_std + self.latent_mean

    # -- diffusion-space codec -------------------------------------------------
    name = "motion_ae"

    @property
    def temporal_factor(self) -> int:
        return self.cfg.temporal_downsample

    @property
    def channels(self) -> int:
        return self.cfg.latent_channels

    def encode_for_diffusion(self, x: torch.Tensor) -> torch.Tensor:
        return self.normalize_latent(self.encode(x, noise_scale=0.0).latent)

    def decode_from_diffusion(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        return self.decode(self.denormalize_latent(z), frames=frames)

    # -- single-sequence helpers --------------------------------------------
    @torch.no_grad()
    def encode_motion(self, m: MotionSequence) -> LatentMotion:
        """Deterministic encoding (posterior mean) of one normalized motion."""
        x = torch.from_numpy(m.coords).unsqueeze(0)
        z = self.encode(x, noise_scale=0.0).latent[0]
        return LatentMotion(latent=z.cpu().numpy(), source_frames=m.frames)

    @torch.no_grad()
    def decode_motion(self, z: LatentMotion, fps: float = 20.0) -> MotionSequence:
        out = self.decode(torch.from_numpy(z.latent).unsqueeze(0), frames=z.source_frames)[0]
        return MotionSequence(out.cpu().numpy(), fps=fps)
