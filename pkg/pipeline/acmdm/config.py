from dataclasses import dataclass, asdict
from typing import Dict, Literal, Optional, Tuple

from pipeline.diffusion.schedule import DiffusionObjective, check_pairing, default_schedule

Conditioning = Literal["adaln", "concat"]

# size -> (depth, heads, width); depth always equals heads
SIZES: Dict[str, Tuple[int, int, int]] = {
    "S": (8, 8, 512),
    "B": (12, 12, 768),
    "L": (16, 16, 1024),
    "XL": (20, 20, 1280),
    # desk-scale smoke model, outside the scaling ladder
    "tiny": (2, 2, 64),
}


@dataclass
class ACMDMConfig:
    size: str
    depth: int
    heads: int
    width: int
    patch_spatial: int
    conditioning: Conditioning = "adaln"
    in_channels: int = 3
    n_joints: int = 22
    objective: DiffusionObjective = DiffusionObjective.V
    schedule: str = "flow"
    patch_temporal: int = 1
    text_dim: int = 512
    ffn_ratio: int = 4
    dropout: float = 0.0
    qk_norm: bool = True
    rope_axis: Literal["flat", "temporal"] = "flat"

    def __post_init__(self):
        self.objective = DiffusionObjective(self.objective)
        check_pairing(self.schedule, self.objective)
        if self.depth != self.heads:
            raise ValueError(f"depth ({self.depth}) must equal heads ({self.heads})")
        if self.width % self.heads or (self.width // self.heads) % 2:
            raise ValueError(f"width {self.width} must split into even-sized heads")
        if self.patch_temporal != 1:
            raise ValueError("patch_temporal is fixed to 1")
        if self.n_joints % self.patch_spatial:
            raise ValueError(
                f"spatial axis of {self.n_joints} is not divisible by patch size {self.patch_spatial}"
            )
        if self.conditioning not in ("adaln", "concat"):
            raise ValueError(f"Unknown conditioning variant: {self.conditioning}")
        if self.rope_axis not in ("flat", "temporal"):
            raise ValueError(f"Unknown rope axis: {self.rope_axis}")

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    @property
    def spatial_tokens(self) -> int:
        return self.n_joints // self.patch_spatial

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "ACMDMConfig":
        return cls(**d)


def build_model(
    size: str,
    patch: int,
    conditioning: Conditioning = "adaln",
    d_in: int = 3,
    objective: DiffusionObjective = DiffusionObjective.V,
    n_joints: int = 22,
    schedule: Optional[str] = None,
    **kwargs,
) -> ACMDMConfig:
    if size not in SIZES:
        raise KeyError(f"Unknown model size: {size} (expected one of {sorted(SIZES)})")
    depth, heads, width = SIZES[size]
    return ACMDMConfig(
        size=size, depth=depth, heads=heads, width=width, patch_spatial=patch,
        conditioning=conditioning, in_channels=d_in, n_joints=n_joints,
        objective=objective, schedule=schedule or default_schedule(objective), **kwargs,
    )
