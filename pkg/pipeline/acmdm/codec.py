from typing import Optional, Protocol

import torch


class LatentCodec(Protocol):
    """Maps normalized coordinates [B, L, N, 3] to diffusion space [B, l, N', d] and back."""
    name: str
    temporal_factor: int
    channels: int

    def encode_for_diffusion(self, x: torch.Tensor) -> torch.Tensor:
        ...

    def decode_from_diffusion(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        ...


class IdentityCodec:
    """Diffusion directly on normalized absolute coordinates."""
    name = "raw"
    temporal_factor = 1
    channels = 3

    def encode_for_diffusion(self, x: torch.Tensor) -> torch.Tensor:
        return x

    def decode_from_diffusion(self, z: torch.Tensor, frames: Optional[int] = None) -> torch.Tensor:
        return z if frames is None else z[:, :frames]


def latent_frame_mask(frame_mask: torch.Tensor, factor: int) -> torch.Tensor:
    """A latent frame is valid when the first source frame it covers is."""
    return frame_mask[:, ::factor]
