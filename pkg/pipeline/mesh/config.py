from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional

from pipeline.mesh.topology import N_LATENT_VERTICES
from pipeline.motion_ae.config import AETrainConfig


@dataclass
class MeshAEConfig:
    n_latent: int = N_LATENT_VERTICES
    latent_dim: int = 8
    hidden_dim: int = 64
    pool_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("n_latent", "latent_dim", "hidden_dim", "pool_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_config(cls, section: Dict, **overrides):
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class MeshAETrainConfig(AETrainConfig):
    """Frames are encoded independently, so short windows and small batches suffice."""
    batch_size: int = 16
    window: int = 16
    epochs: int = 30
    steps_per_epoch: Optional[int] = 50
