"""
ACMDM denoiser over absolute coordinates (or their per-joint latents).

Input [B, l, N, d_in] is tokenized by a (1 x P_S) strided convolution into
time-major tokens, run through `depth` transformer blocks and mapped back by
a per-token linear layer. There is no final norm, so with zero-initialized
adaLN gates the whole network is unpatchify(patchify(x)) at initialization.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn
from einops import rearrange

from pipeline.acmdm.config import ACMDMConfig
from pipeline.acmdm.layers import ACMDMBlock, TimestepEmbedder
from pipeline.diffusion.schedule import DiffusionObjective


@dataclass
class TokenGrid:
    tokens: torch.Tensor  # [B, T, d]
    t_len: int
    s_len: int

    def __post_init__(self):
        if self.tokens.shape[1] != self.t_len * self.s_len:
            raise ValueError(
                f"{self.tokens.shape[1]} tokens for a {self.t_len} x {self.s_len} grid"
            )


@dataclass
class Condition:
    vector: torch.Tensor  # [B, d] timestep + projected text
    tokens: torch.Tensor  # [B, 2, d] text token, timestep token


@dataclass
class BlockInputs:
    """Token stream as seen by the blocks (condition prefix included for concat)."""
    x: torch.Tensor
    cond: Condition
    positions: torch.Tensor
    key_mask: Optional[torch.Tensor]
    grid: TokenGrid


class ACMDM(nn.Module):
    def __init__(self, cfg: ACMDMConfig):
        super().__init__()
        self.cfg = cfg
        p = cfg.patch_spatial
        self.patch_embed = nn.Conv2d(cfg.in_channels, cfg.width, kernel_size=(1, p), stride=(1, p))
        self.unpatch = nn.Linear(cfg.width, cfg.in_channels * p)
        self.text_proj = nn.Linear(cfg.text_dim, cfg.width)
        self.null_text = nn.Parameter(torch.randn(cfg.text_dim) * 0.02)
        time_scale = 1000.0 if cfg.schedule == "flow" else 1.0
        self.t_embedder = TimestepEmbedder(cfg.width, time_scale=time_scale)
        self.blocks = nn.ModuleList([ACMDMBlock(cfg) for _ in range(cfg.depth)])
        self.n_prefix = 2 if cfg.conditioning == "concat" else 0

    @property
    def objective(self) -> DiffusionObjective:
        return self.cfg.objective

    # -- tokenization ----------------------------------------------------------
    def patchify(self, x: torch.Tensor) -> TokenGrid:
        """[B, l, N, d_in] -> time-major tokens [B, l * N / P_S, d]."""
        if x.ndim != 4 or x.shape[-1] != self.cfg.in_channels:
            raise ValueError(f"expected [B, l, N, {self.cfg.in_channels}], got {tuple(x.shape)}")
        if x.shape[2] % self.cfg.patch_spatial:
            raise ValueError(
                f"spatial axis of {x.shape[2]} is not divisible by patch size {self.cfg.patch_spatial}"
            )
        h = self.patch_embed(x.permute(0, 3, 1, 2))
        return TokenGrid(rearrange(h, "b d t s -> b (t s) d"), t_len=h.shape[2], s_len=h.shape[3])

    def unpatchify(self, grid: TokenGrid) -> torch.Tensor:
        if grid.tokens.shape[-1] != self.cfg.width:
            raise ValueError(f"token width {grid.tokens.shape[-1]} != model width {self.cfg.width}")
        out = self.unpatch(grid.tokens)
        return rearrange(out, "b (t s) (p c) -> b t (s p) c",
                         t=grid.t_len, s=grid.s_len, p=self.cfg.patch_spatial)

    # -- conditioning ----------------------------------------------------------
    def text_or_null(self, text: Optional[torch.Tensor], batch: int) -> torch.Tensor:
        if text is None:
            return self.null_text.expand(batch, -1)
        return text

    def drop_text(self, text: torch.Tensor, prob: float,
                  generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Replace each row by the null embedding with probability `prob`."""
        if prob <= 0:
            return text
        drop = torch.rand(text.shape[0], generator=generator) < prob
        return torch.where(drop[:, None].to(text.device), self.null_text.expand_as(text), text)

    def embed_condition(self, t: torch.Tensor, text: Optional[torch.Tensor]) -> Condition:
        t_emb = self.t_embedder(t)
        text_emb = self.text_proj(self.text_or_null(text, t.shape[0]))
        return Condition(vector=t_emb + text_emb, tokens=torch.stack([text_emb, t_emb], dim=1))

    def token_positions(self, grid: TokenGrid) -> torch.Tensor:
        n = grid.t_len * grid.s_len
        if self.cfg.rope_axis == "flat":
            return torch.arange(self.n_prefix + n)
        frames = torch.arange(n) // grid.s_len + (1 if self.n_prefix else 0)
        return torch.cat([torch.zeros(self.n_prefix, dtype=torch.long), frames])

    def token_mask(self, frame_mask: Optional[torch.Tensor], grid: TokenGrid) -> Optional[torch.Tensor]:
        if frame_mask is None:
            return None
        mask = frame_mask.bool().repeat_interleave(grid.s_len, dim=1)
        if self.n_prefix:
            prefix = torch.ones(mask.shape[0], self.n_prefix, dtype=torch.bool, device=mask.device)
            mask = torch.cat([prefix, mask], dim=1)
        return mask

    # -- transformer -----------------------------------------------------------
    def stream_inputs(self, grid: TokenGrid, t: torch.Tensor, text: Optional[torch.Tensor],
                      frame_mask: Optional[torch.Tensor] = None) -> BlockInputs:
        cond = self.embed_condition(t, text)
        stream = grid.tokens
        if self.n_prefix:
            stream = torch.cat([cond.tokens, stream], dim=1)
        positions = self.token_positions(grid).to(stream.device)
        return BlockInputs(x=stream, cond=cond, positions=positions,
                           key_mask=self.token_mask(frame_mask, grid), grid=grid)

    def enter(self, x: torch.Tensor, t: torch.Tensor, text: Optional[torch.Tensor],
              frame_mask: Optional[torch.Tensor] = None) -> BlockInputs:
        return self.stream_inputs(self.patchify(x), t, text, frame_mask)

    def run_blocks(self, inputs: BlockInputs,
                   residuals: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
        """Run every block; residuals[i], when given, is added to block i's input."""
        if residuals is not None and len(residuals) != len(self.blocks):
            raise ValueError(f"{len(residuals)} residuals for {len(self.blocks)} blocks")
        x = inputs.x
        for i, block in enumerate(self.blocks):
            if residuals is not None:
                x = x + residuals[i]
            x = block(x, inputs.cond.vector, inputs.positions, inputs.key_mask)
        return x

    def exit(self, stream: torch.Tensor, grid: TokenGrid) -> torch.Tensor:
        return self.unpatchify(TokenGrid(stream[:, self.n_prefix:], grid.t_len, grid.s_len))

    def forward(self, x: torch.Tensor, t: torch.Tensor, text: Optional[torch.Tensor] = None,
                frame_mask: Optional[torch.Tensor] = None,
                residuals: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
        inputs = self.enter(x, t, text, frame_mask)
        return self.exit(self.run_blocks(inputs, residuals), inputs.grid)


def acmdm_forward(model: ACMDM, grid: TokenGrid, t: torch.Tensor,
                  text: Optional[torch.Tensor] = None,
                  frame_mask: Optional[torch.Tensor] = None) -> TokenGrid:
    """Token-space prediction for an already patchified grid."""
    out = model.run_blocks(model.stream_inputs(grid, t, text, frame_mask))
    return TokenGrid(out[:, model.n_prefix:], grid.t_len, grid.s_len)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
