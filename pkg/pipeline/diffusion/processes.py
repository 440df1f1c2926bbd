"""
Forward noising processes, regression targets and the implied clean sample.
"""
from typing import Optional, Union

import torch
import torch.nn.functional as F

from pipeline.diffusion.schedule import DiffusionObjective, NoiseSchedule

TimeLike = Union[int, float, torch.Tensor]


def broadcast_time(values: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """Broadcast a scalar or [B] tensor against x of shape [B, ...]."""
    values = values.to(device=like.device, dtype=like.dtype)
    if values.ndim == 0:
        return values
    return values.reshape((-1,) + (1,) * (like.ndim - 1))


def _as_tensor(t: TimeLike) -> torch.Tensor:
    return t if isinstance(t, torch.Tensor) else torch.tensor(t)


def alpha_bar_at(schedule: NoiseSchedule, t: TimeLike) -> torch.Tensor:
    if schedule.kind != "ddpm":
        raise ValueError("alpha_bar is only defined for the ddpm schedule")
    t = _as_tensor(t).long()
    if (t < 0).any() or (t > schedule.n_steps).any():
        raise ValueError(f"timestep out of range [0, {schedule.n_steps}]: {t.tolist()}")
    return schedule.alpha_bar[t.cpu()]


def _check_shapes(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def ddpm_forward(x0: torch.Tensor, t: TimeLike, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    _check_shapes(x0, eps)
    ab = broadcast_time(alpha_bar_at(schedule, t), x0)
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps


def flow_forward(x0: torch.Tensor, t: TimeLike, eps: torch.Tensor) -> torch.Tensor:
    _check_shapes(x0, eps)
    t = _as_tensor(t)
    if (t < 0).any() or (t >= 1).any():
        raise ValueError(f"flow time must lie in [0, 1), got {t.tolist()}")
    t = broadcast_time(t, x0)
    return (1.0 - t) * x0 + t * eps


def forward_process(x0: torch.Tensor, t: TimeLike, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    if schedule.kind == "ddpm":
        return ddpm_forward(x0, t, eps, schedule)
    return flow_forward(x0, t, eps)


def make_target(obj: DiffusionObjective, x0: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    _check_shapes(x0, eps)
    obj = DiffusionObjective(obj)
    if obj == DiffusionObjective.X0:
        return x0
    if obj == DiffusionObjective.EPS:
        return eps
    # v = d x_t / dt on the linear path, so x0 = x_t - t * v
    return eps - x0


def diffusion_loss(pred: torch.Tensor, target: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """MSE over all elements, or over elements where `mask` (broadcastable) is true."""
    _check_shapes(pred, target)
    if mask is None:
        return F.mse_loss(pred, target)
    weight = mask.to(pred.dtype).expand_as(pred)
    return ((pred - target) ** 2 * weight).sum() / weight.sum().clamp_min(1.0)


def sample_timesteps(schedule: NoiseSchedule, batch: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """ddpm: integers in [1, n_steps]; flow: uniform on [0, 1)."""
    if schedule.kind == "ddpm":
        return torch.randint(1, schedule.n_steps + 1, (batch,), generator=generator)
    return torch.rand(batch, generator=generator, dtype=torch.float64).float().clamp_max(1.0 - 1e-6)


def predict_x0(
    obj: DiffusionObjective,
    x_t: torch.Tensor,
    pred: torch.Tensor,
    t: TimeLike,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """Clean sample implied by a model prediction at time t."""
    obj = DiffusionObjective(obj)
    if obj == DiffusionObjective.X0:
        return pred
    if schedule.kind == "ddpm":
        if obj == DiffusionObjective.V:
            raise ValueError("the v objective is defined on the flow path only")
        ab = broadcast_time(alpha_bar_at(schedule, t), x_t)
        return (x_t - (1.0 - ab).sqrt() * pred) / ab.sqrt()
    t = broadcast_time(_as_tensor(t), x_t)
    if obj == DiffusionObjective.V:
        return x_t - t * pred
    return (x_t - t * pred) / (1.0 - t)
