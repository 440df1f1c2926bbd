"""
Shared training contract: optimizer, learning-rate schedule, EMA and batching.
"""
import math
from dataclasses import dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, loss: float, last_checkpoint: Optional[str] = None):
        self.step = step
        self.loss = loss
        self.last_checkpoint = last_checkpoint
        msg = f"loss became {loss} at step {step}"
        if last_checkpoint:
            msg += f"; last good checkpoint: {last_checkpoint}"
        super().__init__(msg)


@dataclass
class TrainConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    batch_size: int = 64
    max_frames: int = 196
    lr: float = 2e-4
    warmup_steps: int = 2000
    decay_step: int = 50_000
    decay_factor: float = 0.1
    epochs: int = 200
    ema_decay: float = 0.9999
    seed: int = 0
    text_drop_prob: float = 0.1
    weight_decay: float = 0.0
    steps_per_epoch: Optional[int] = None
    checkpoint_every: int = 1000

    def __post_init__(self):
        for name in ("batch_size", "max_frames", "lr", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.warmup_steps >= self.decay_step:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must be smaller than decay_step ({self.decay_step})"
            )
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError(f"ema_decay must lie in [0, 1], got {self.ema_decay}")

    @classmethod
    def from_config(cls, section: Dict, **overrides):
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def epoch_steps(self, n_items: int) -> int:
        if self.steps_per_epoch is not None:
            return self.steps_per_epoch
        return max(1, math.ceil(n_items / self.batch_size))


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to cfg.lr, constant, then multiplied by decay_factor from decay_step on."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if step < cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    if step >= cfg.decay_step:
        return cfg.lr * cfg.decay_factor
    return cfg.lr


def make_optimizer(params: Iterable[nn.Parameter], cfg: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params, lr=lr_at(0, cfg), betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay
    )


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def check_finite(loss: torch.Tensor, step: int, last_checkpoint: Optional[str] = None) -> float:
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDivergedError(step, value, last_checkpoint)
    return value


TensorSource = Union[nn.Module, Sequence[torch.Tensor]]


def _tensors(source: TensorSource) -> List[torch.Tensor]:
    if isinstance(source, nn.Module):
        return list(source.parameters())
    return list(source)


@torch.no_grad()
def ema_update(ema_params: TensorSource, params: TensorSource, decay: float) -> TensorSource:
    """ema <- decay * ema + (1 - decay) * params, in place."""
    ema_list, param_list = _tensors(ema_params), _tensors(params)
    if len(ema_list) != len(param_list):
        raise ValueError(f"{len(ema_list)} EMA tensors for {len(param_list)} parameters")
    for e, p in zip(ema_list, param_list):
        if e.shape != p.shape:
            raise ValueError(f"EMA shape {tuple(e.shape)} does not match parameter {tuple(p.shape)}")
        e.mul_(decay).add_(p.detach(), alpha=1.0 - decay)
    if isinstance(ema_params, nn.Module) and isinstance(params, nn.Module):
        for eb, pb in zip(ema_params.buffers(), params.buffers()):
            eb.copy_(pb)
    return ema_params


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------
def collate_windows(
    sequences: Sequence[np.ndarray],
    indices: Sequence[int],
    max_frames: int,
    rng: np.random.Generator,
    multiple: int = 1,
    return_starts: bool = False,
):
    """
    Crop sequences longer than max_frames at a random start, keep shorter ones
    whole, and zero-pad to the longest (rounded up to `multiple`).

    Returns (x [B, T, ...], frame_mask [B, T] with True on real frames), plus
    the crop start of every element when `return_starts` is set.
    """
    crops, starts = [], []
    for i in indices:
        seq = sequences[i]
        start = 0
        if len(seq) > max_frames:
            start = int(rng.integers(0, len(seq) - max_frames + 1))
            seq = seq[start:start + max_frames]
        crops.append(seq)
        starts.append(start)
    longest = max(len(c) for c in crops)
    padded_len = int(math.ceil(longest / multiple) * multiple)
    x = np.zeros((len(crops), padded_len) + crops[0].shape[1:], dtype=np.float32)
    mask = np.zeros((len(crops), padded_len), dtype=bool)
    for b, c in enumerate(crops):
        x[b, :len(c)] = c
        mask[b, :len(c)] = True
    if return_starts:
        return torch.from_numpy(x), torch.from_numpy(mask), starts
    return torch.from_numpy(x), torch.from_numpy(mask)


def fixed_windows(
    sequences: Sequence[np.ndarray],
    indices: Sequence[int],
    window: int,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Random fixed-length windows, one per index; every sequence must cover `window` frames."""
    out = []
    for i in indices:
        seq = sequences[i]
        if len(seq) < window:
            raise ValueError(f"sequence {i} has {len(seq)} frames, shorter than window {window}")
        start = int(rng.integers(0, len(seq) - window + 1))
        out.append(seq[start:start + window])
    return torch.from_numpy(np.stack(out).astype(np.float32))
