from pipeline.diffusion.schedule import DiffusionObjective, NoiseSchedule, SamplerConfig
from pipeline.diffusion.processes import (
    ddpm_forward,
    diffusion_loss,
    flow_forward,
    forward_process,
    make_target,
    predict_x0,
    sample_timesteps,
)
from pipeline.diffusion.samplers import ancestral_step, cfg_combine, euler_ode_step, sample
