"""
ControlNet branch over a frozen ACMDM.

The branch is a trainable copy of the backbone blocks. Block i of the branch
emits a residual through a zero-initialized projection; that residual is
added to the input of backbone block i.
"""
import copy
from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from pipeline.acmdm.config import ACMDMConfig
from pipeline.acmdm.layers import ZeroLinear
from pipeline.acmdm.model import ACMDM, BlockInputs
from pipeline.diffusion.schedule import DiffusionObjective
from misc.utility_functions import state_checksum

CONTROL_CHANNELS = 4  # xyz + mask


class FrozenParametersMutatedError(RuntimeError):
    pass


class ControlEncoder(nn.Module):
    """(values || mask) [B, L, N, 4] -> tokens laid out like the backbone's."""

    def __init__(self, cfg: ACMDMConfig, temporal_factor: int = 1, hidden: int = 64):
        super().__init__()
        self.temporal_factor = temporal_factor
        self.net = nn.Sequential(
            nn.Conv2d(CONTROL_CHANNELS, hidden, kernel_size=3, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, hidden, kernel_size=3, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, cfg.width, kernel_size=(1, cfg.patch_spatial), stride=(1, cfg.patch_spatial)),
        )

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        if grid.ndim != 4 or grid.shape[-1] != CONTROL_CHANNELS:
            raise ValueError(f"control grid must be [B, L, N, {CONTROL_CHANNELS}], got {tuple(grid.shape)}")
        h = self.net(grid.permute(0, 3, 1, 2))
        f = self.temporal_factor
        if f > 1:
            h = F.pad(h, (0, 0, 0, (-h.shape[2]) % f))
            h = F.avg_pool2d(h, kernel_size=(f, 1))
        return rearrange(h, "b d t s -> b (t s) d")


class ControlNetBranch(nn.Module):
    def __init__(self, main: ACMDM, temporal_factor: int = 1, hidden: int = 64):
        super().__init__()
        self.cfg = main.cfg
        self.n_prefix = main.n_prefix
        self.blocks = copy.deepcopy(main.blocks).requires_grad_(True)
        self.projections = nn.ModuleList(ZeroLinear(main.cfg.width, main.cfg.width) for _ in self.blocks)
        self.encoder = ControlEncoder(main.cfg, temporal_factor, hidden)

    @property
    def depth(self) -> int:
        return len(self.blocks)

    def residuals(self, inputs: BlockInputs, ctrl_feats: torch.Tensor) -> List[torch.Tensor]:
        if ctrl_feats.shape[1] != inputs.x.shape[1] - self.n_prefix:
            raise ValueError(
                f"{ctrl_feats.shape[1]} control tokens for {inputs.x.shape[1] - self.n_prefix} motion tokens"
            )
        if self.n_prefix:
            ctrl_feats = F.pad(ctrl_feats, (0, 0, self.n_prefix, 0))
        h = inputs.x + ctrl_feats
        out = []
        for block, proj in zip(self.blocks, self.projections):
            h = block(h, inputs.cond.vector, inputs.positions, inputs.key_mask)
            out.append(proj(h))
        return out


@dataclass
class ControlNetState:
    """Trainable branch plus the backbone it steers, which must stay untouched."""
    branch: ControlNetBranch
    frozen_main: ACMDM
    main_checksum: str = ""

    def __post_init__(self):
        if self.branch.depth != len(self.frozen_main.blocks):
            raise ValueError(
                f"branch depth {self.branch.depth} != backbone depth {len(self.frozen_main.blocks)}"
            )
        self.frozen_main.requires_grad_(False)
        if not self.main_checksum:
            self.main_checksum = state_checksum(self.frozen_main)

    def verify_frozen(self) -> None:
        now = state_checksum(self.frozen_main)
        if now != self.main_checksum:
            raise FrozenParametersMutatedError(
                f"backbone checksum changed from {self.main_checksum[:12]} to {now[:12]}"
            )


def controlled_forward(
    main: ACMDM,
    branch: ControlNetBranch,
    x_t: torch.Tensor,
    t: torch.Tensor,
    text: Optional[torch.Tensor],
    ctrl_feats: torch.Tensor,
    frame_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    if branch.depth != len(main.blocks):
        raise ValueError(f"branch depth {branch.depth} != backbone depth {len(main.blocks)}")
    inputs = main.enter(x_t, t, text, frame_mask)
    return main.exit(main.run_blocks(inputs, branch.residuals(inputs, ctrl_feats)), inputs.grid)


class ControlledDenoiser(nn.Module):
    """Sampler-facing wrapper; control features ride along as a keyword argument."""

    def __init__(self, state: ControlNetState):
        super().__init__()
        self.main = state.frozen_main
        self.branch = state.branch

    @property
    def objective(self) -> DiffusionObjective:
        return self.main.objective

    @property
    def cfg(self) -> ACMDMConfig:
        return self.main.cfg

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, text: Optional[torch.Tensor] = None,
                ctrl_feats: Optional[torch.Tensor] = None,
                frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        if ctrl_feats is None:
            return self.main(x_t, t, text, frame_mask)
        return controlled_forward(self.main, self.branch, x_t, t, text, ctrl_feats, frame_mask)
