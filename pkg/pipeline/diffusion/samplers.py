"""
Reverse-time samplers: DDPM ancestral steps, Euler steps on the flow ODE,
and classifier-free guidance around a text-conditioned denoiser.
"""
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import torch

from pipeline.diffusion.processes import TimeLike, broadcast_time, alpha_bar_at, predict_x0
from pipeline.diffusion.schedule import DiffusionObjective, NoiseSchedule, SamplerConfig

Rng = Union[None, torch.Generator, Sequence[torch.Generator]]


class Denoiser(Protocol):
    objective: DiffusionObjective

    def __call__(self, x_t: torch.Tensor, t: torch.Tensor, text: Optional[torch.Tensor], **kwargs) -> torch.Tensor:
        ...


def element_generators(seed: int, batch: int) -> List[torch.Generator]:
    """Independent per-element streams, so results don't depend on batch composition."""
    states = np.random.SeedSequence(seed).spawn(batch)
    return [torch.Generator().manual_seed(int(s.generate_state(1, dtype=np.uint64)[0] >> 1)) for s in states]


def randn(shape: Tuple[int, ...], rng: Rng = None) -> torch.Tensor:
    if rng is None or isinstance(rng, torch.Generator):
        return torch.randn(shape, generator=rng)
    if len(rng) != shape[0]:
        raise ValueError(f"{len(rng)} generators for a batch of {shape[0]}")
    return torch.stack([torch.randn(shape[1:], generator=g) for g in rng])


def ancestral_step(
    x_t: torch.Tensor,
    pred: torch.Tensor,
    t: int,
    schedule: NoiseSchedule,
    obj: DiffusionObjective,
    rng: Rng = None,
    t_prev: Optional[int] = None,
) -> torch.Tensor:
    """
    One step of the DDPM posterior q(x_s | x_t, x0_hat) with s = t_prev (default t - 1).
    Landing on s = 0 returns x0_hat without noise.
    """
    obj = DiffusionObjective(obj)
    if obj == DiffusionObjective.V:
        raise ValueError("ancestral sampling supports the x0 and eps objectives only")
    s = t - 1 if t_prev is None else t_prev
    if not 0 <= s < t:
        raise ValueError(f"t_prev must satisfy 0 <= t_prev < t, got t={t}, t_prev={s}")
    x0_hat = predict_x0(obj, x_t, pred, t, schedule)
    if s == 0:
        return x0_hat

    ab_t = float(alpha_bar_at(schedule, t))
    ab_s = float(alpha_bar_at(schedule, s))
    alpha_ts = ab_t / ab_s
    coef_x0 = np.sqrt(ab_s) * (1.0 - alpha_ts) / (1.0 - ab_t)
    coef_xt = np.sqrt(alpha_ts) * (1.0 - ab_s) / (1.0 - ab_t)
    sigma = np.sqrt((1.0 - ab_s) / (1.0 - ab_t) * (1.0 - alpha_ts))
    noise = randn(tuple(x_t.shape), rng).to(device=x_t.device, dtype=x_t.dtype)
    return coef_x0 * x0_hat + coef_xt * x_t + sigma * noise


def euler_ode_step(x_t: torch.Tensor, v_hat: torch.Tensor, t: TimeLike, dt: TimeLike) -> torch.Tensor:
    """Move from t toward the data end of the path: x_{t-dt} = x_t - dt * v."""
    dt = dt if isinstance(dt, torch.Tensor) else torch.tensor(dt)
    return x_t - broadcast_time(dt, x_t) * v_hat


def cfg_combine(cond_out: torch.Tensor, uncond_out: torch.Tensor, s: float) -> torch.Tensor:
    if cond_out.shape != uncond_out.shape:
        raise ValueError(f"shape mismatch: {tuple(cond_out.shape)} vs {tuple(uncond_out.shape)}")
    return uncond_out + s * (cond_out - uncond_out)


def guided_prediction(
    model: Denoiser,
    x_t: torch.Tensor,
    t: torch.Tensor,
    text_cond: torch.Tensor,
    cfg_scale: float,
    model_kwargs: Optional[Dict[str, Any]] = None,
) -> torch.Tensor:
    kwargs = model_kwargs or {}
    cond = model(x_t, t, text_cond, **kwargs)
    uncond = model(x_t, t, None, **kwargs)
    return cfg_combine(cond, uncond, cfg_scale)


def _ddpm_timesteps(schedule: NoiseSchedule, steps: int) -> List[int]:
    ts = np.round(np.linspace(schedule.n_steps, 0, steps + 1)).astype(int)
    return [int(t) for t in dict.fromkeys(ts.tolist())]


@torch.no_grad()
def sample(
    model: Denoiser,
    text_cond: torch.Tensor,
    sampler: SamplerConfig,
    schedule: NoiseSchedule,
    shape: Tuple[int, ...],
    seed: int,
    model_kwargs: Optional[Dict[str, Any]] = None,
) -> torch.Tensor:
    """
    Iterate from pure noise to a clean sample of `shape` ([B, ...]).

    Each step evaluates the model with the text condition and with the null
    condition and combines them with `cfg_combine`.
    """
    sampler.validate(schedule, model.objective)
    if text_cond.shape[0] != shape[0]:
        raise ValueError(f"{text_cond.shape[0]} text conditions for a batch of {shape[0]}")
    rng = element_generators(seed, shape[0])
    x = randn(shape, rng)
    batch = shape[0]

    if sampler.kind == "euler_ode":
        ts = torch.linspace(1.0, 0.0, sampler.steps + 1, dtype=torch.float64)
        for i in range(sampler.steps):
            t = ts[i].float().expand(batch)
            v = guided_prediction(model, x, t, text_cond, sampler.cfg_scale, model_kwargs)
            x = euler_ode_step(x, v, ts[i], ts[i] - ts[i + 1])
        return x

    ts = _ddpm_timesteps(schedule, sampler.steps)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        t_batch = torch.full((batch,), float(t))
        pred = guided_prediction(model, x, t_batch, text_cond, sampler.cfg_scale, model_kwargs)
        x = ancestral_step(x, pred, t, schedule, model.objective, rng=rng, t_prev=t_prev)
    return x
