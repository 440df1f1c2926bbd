from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import torch

ScheduleKind = Literal["ddpm", "flow"]
SamplerKind = Literal["ancestral", "euler_ode"]


class DiffusionObjective(str, Enum):
    X0 = "x0"
    EPS = "eps"
    V = "v"


@dataclass
class NoiseSchedule:
    """
    ddpm: discrete steps 0..n_steps with a linear beta ramp and alpha_bar[0] = 1.
    flow: continuous t in [0, 1) on the straight path (1 - t) x0 + t eps.
    """
    kind: ScheduleKind = "flow"
    n_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    alpha_bar: torch.Tensor = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("ddpm", "flow"):
            raise ValueError(f"Unknown schedule kind: {self.kind}")
        if self.kind == "ddpm":
            if self.n_steps < 1:
                raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
            betas = torch.linspace(self.beta_start, self.beta_end, self.n_steps, dtype=torch.float64)
            self.alpha_bar = torch.cat([torch.ones(1, dtype=torch.float64), torch.cumprod(1.0 - betas, dim=0)])
        else:
            self.alpha_bar = torch.empty(0, dtype=torch.float64)

    @classmethod
    def ddpm(cls, n_steps: int = 1000) -> "NoiseSchedule":
        return cls(kind="ddpm", n_steps=n_steps)

    @classmethod
    def flow(cls) -> "NoiseSchedule":
        return cls(kind="flow")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_steps": self.n_steps,
                "beta_start": self.beta_start, "beta_end": self.beta_end}


@dataclass
class SamplerConfig:
    steps: int = 50
    cfg_scale: float = 3.0
    kind: SamplerKind = "euler_ode"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.kind not in ("ancestral", "euler_ode"):
            raise ValueError(f"Unknown sampler kind: {self.kind}")

    def validate(self, schedule: NoiseSchedule, objective: DiffusionObjective) -> None:
        objective = DiffusionObjective(objective)
        if self.kind == "euler_ode" and (schedule.kind != "flow" or objective != DiffusionObjective.V):
            raise ValueError(
                f"euler_ode sampling needs a flow schedule and the v objective, "
                f"got {schedule.kind}/{objective.value}"
            )
        if self.kind == "ancestral":
            if schedule.kind != "ddpm":
                raise ValueError(f"ancestral sampling needs a ddpm schedule, got {schedule.kind}")
            if objective == DiffusionObjective.V:
                raise ValueError("ancestral sampling supports the x0 and eps objectives only")
        if self.kind == "ancestral" and self.steps > schedule.n_steps:
            raise ValueError(f"{self.steps} steps exceed the schedule's {schedule.n_steps}")

    @classmethod
    def for_objective(cls, schedule: NoiseSchedule, steps: int = 50, cfg_scale: float = 3.0) -> "SamplerConfig":
        kind = "euler_ode" if schedule.kind == "flow" else "ancestral"
        return cls(steps=steps, cfg_scale=cfg_scale, kind=kind)


def default_schedule(objective: DiffusionObjective) -> ScheduleKind:
    return "flow" if DiffusionObjective(objective) == DiffusionObjective.V else "ddpm"


def check_pairing(schedule: ScheduleKind, objective: DiffusionObjective) -> None:
    """Only flow/v and ddpm/x0|eps have a sampler; reject the rest before training."""
    objective = DiffusionObjective(objective)
    if schedule != default_schedule(objective):
        raise ValueError(
            f"the {objective.value} objective cannot be sampled on a {schedule} schedule "
            f"(use {default_schedule(objective)})"
        )
