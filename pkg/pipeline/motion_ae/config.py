from dataclasses import dataclass, fields, asdict
from typing import Dict, Optional

from services.trainer import TrainConfig


@dataclass
class AEConfig:
    causal: bool = True
    variational: bool = False
    n_blocks: int = 3
    layers_per_block: int = 3
    hidden_dim: int = 512
    latent_channels: int = 4
    temporal_downsample: int = 4
    kl_weight: float = 1e-4
    in_channels: int = 3

    def __post_init__(self):
        d = self.temporal_downsample
        if d < 1 or d & (d - 1):
            raise ValueError(f"temporal_downsample must be a power of 2, got {d}")
        if self.n_downsample_blocks > self.n_blocks:
            raise ValueError(
                f"{self.n_blocks} blocks cannot realize a temporal downsample of {d}"
            )
        if self.latent_channels < 1:
            raise ValueError(f"latent_channels must be >= 1, got {self.latent_channels}")
        if self.layers_per_block < 1:
            raise ValueError(f"layers_per_block must be >= 1, got {self.layers_per_block}")

    @property
    def n_downsample_blocks(self) -> int:
        return self.temporal_downsample.bit_length() - 1

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_config(cls, section: Dict, **overrides):
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class AETrainConfig(TrainConfig):
    """AE schedule: 64-frame windows, decay by 20x late in training."""
    batch_size: int = 256
    window: int = 64
    warmup_steps: int = 1000
    decay_step: int = 150_000
    decay_factor: float = 0.05
    epochs: int = 50
    steps_per_epoch: Optional[int] = 100
