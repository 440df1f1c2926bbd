import math
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from pipeline.acmdm.config import ACMDMConfig


# ---------------------------------------------------------------------------
# Rotary position embedding
# ---------------------------------------------------------------------------
def rope_angles(positions: torch.Tensor, dim: int, base: float = 10000.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """cos/sin tables for integer (or real) positions [..., T] -> [..., T, dim]."""
    inv_freq = 1.0 / (base ** (torch.arange(0, dim, 2, dtype=torch.float64) / dim))
    angles = positions.to(torch.float64)[..., None] * inv_freq
    angles = torch.cat([angles, angles], dim=-1)
    return angles.cos(), angles.sin()


def _rotate_half(x: torch.Tensor) -> torch.Tensor:
    x1, x2 = x.chunk(2, dim=-1)
    return torch.cat([-x2, x1], dim=-1)


def apply_rope(x: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
    """x: [B, H, T, D]; positions: [T] or [B, T]."""
    cos, sin = rope_angles(positions, x.shape[-1])
    if cos.ndim == 3:
        cos, sin = cos[:, None], sin[:, None]
    cos, sin = cos.to(x.dtype), sin.to(x.dtype)
    return x * cos + _rotate_half(x) * sin


# ---------------------------------------------------------------------------
# Attention / FFN
# ---------------------------------------------------------------------------
class Attention(nn.Module):
    """Multi-head self-attention with L2 query/key normalization and RoPE."""

    def __init__(self, width: int, heads: int, qk_norm: bool = True, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.qk_norm = qk_norm
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.dropout = nn.Dropout(dropout)
        # learned temperature on unit-norm q/k
        self.logit_scale = nn.Parameter(torch.tensor(math.log(math.sqrt(self.head_dim))))

    def _split(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        b, t, _ = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        return qkv[0], qkv[1], qkv[2]

    def _prepare(self, q: torch.Tensor, k: torch.Tensor, positions: torch.Tensor):
        if self.qk_norm:
            q, k = F.normalize(q, dim=-1), F.normalize(k, dim=-1)
        return apply_rope(q, positions), apply_rope(k, positions)

    def _logits(self, q: torch.Tensor, k: torch.Tensor, key_mask: Optional[torch.Tensor]) -> torch.Tensor:
        scale = self.logit_scale.exp() if self.qk_norm else 1.0 / math.sqrt(self.head_dim)
        logits = (q @ k.transpose(-2, -1)) * scale
        if key_mask is not None:
            logits = logits.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        return logits

    def project_qk(self, x: torch.Tensor, positions: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        q, k, _ = self._split(x)
        return self._prepare(q, k, positions)

    def attention_logits(self, x: torch.Tensor, positions: torch.Tensor,
                         key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Pre-softmax logits [B, H, T, T]; masked keys are -inf."""
        q, k = self.project_qk(x, positions)
        return self._logits(q, k, key_mask)

    def forward(self, x: torch.Tensor, positions: torch.Tensor,
                key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self._split(x)
        q, k = self._prepare(q, k, positions)
        attn = self.dropout(self._logits(q, k, key_mask).softmax(dim=-1))
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)


class SwiGLU(nn.Module):
    def __init__(self, width: int, ratio: int = 4, dropout: float = 0.0):
        super().__init__()
        hidden = width * ratio
        self.w_in = nn.Linear(width, hidden)
        self.w_gate = nn.Linear(width, hidden)
        self.w_out = nn.Linear(hidden, width)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.w_out(self.dropout(F.silu(self.w_gate(x)) * self.w_in(x)))


# ---------------------------------------------------------------------------
# Conditioning
# ---------------------------------------------------------------------------
class TimestepEmbedder(nn.Module):
    """Sinusoidal features of a (possibly fractional) timestep lifted to width by a 2-layer MLP."""

    def __init__(self, width: int, frequency_dim: int = 256, time_scale: float = 1.0):
        super().__init__()
        self.frequency_dim = frequency_dim
        self.time_scale = time_scale
        self.mlp = nn.Sequential(
            nn.Linear(frequency_dim, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )

    @staticmethod
    def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half
        )
        args = t[:, None].float() * freqs[None]
        return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.mlp(self.timestep_embedding(t * self.time_scale, self.frequency_dim))


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class ACMDMBlock(nn.Module):
    """
    adaln: six zero-initialized modulation vectors (shift/scale/gate for the
    attention and FFN branches) regressed from the condition vector, so the
    block is the identity at initialization.
    concat: plain pre-norm block; the condition travels as prepended tokens.
    """

    def __init__(self, cfg: ACMDMConfig):
        super().__init__()
        self.conditioning = cfg.conditioning
        adaptive = cfg.conditioning == "adaln"
        self.norm1 = nn.LayerNorm(cfg.width, elementwise_affine=not adaptive, eps=1e-6)
        self.norm2 = nn.LayerNorm(cfg.width, elementwise_affine=not adaptive, eps=1e-6)
        self.attn = Attention(cfg.width, cfg.heads, qk_norm=cfg.qk_norm, dropout=cfg.dropout)
        self.ffn = SwiGLU(cfg.width, cfg.ffn_ratio, dropout=cfg.dropout)
        if adaptive:
            self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(cfg.width, 6 * cfg.width))
            nn.init.zeros_(self.modulation[-1].weight)
            nn.init.zeros_(self.modulation[-1].bias)

    def forward(self, x: torch.Tensor, c: Optional[torch.Tensor], positions: torch.Tensor,
                key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        if self.conditioning == "concat":
            x = x + self.attn(self.norm1(x), positions, key_mask)
            return x + self.ffn(self.norm2(x))
        shift_a, scale_a, gate_a, shift_f, scale_f, gate_f = self.modulation(c).chunk(6, dim=-1)
        x = x + gate_a.unsqueeze(1) * self.attn(modulate(self.norm1(x), shift_a, scale_a), positions, key_mask)
        return x + gate_f.unsqueeze(1) * self.ffn(modulate(self.norm2(x), shift_f, scale_f))


class ZeroLinear(nn.Linear):
    """Linear projection initialized to exactly zero."""

    def __init__(self, in_features: int, out_features: int):
        super().__init__(in_features, out_features)
        nn.init.zeros_(self.weight)
        nn.init.zeros_(self.bias)
