import copy
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from misc.utility_functions import set_seed, timeit
from pipeline.acmdm.codec import IdentityCodec, LatentCodec
from pipeline.acmdm.model import ACMDM
from pipeline.acmdm.train import DiffusionCorpus, diffusion_batch, rng_snapshot
from pipeline.control.model import ControlNetBranch, ControlNetState, controlled_forward
from pipeline.control.spec import (
    DENSITY_LEVELS,
    encode_control,
    sample_control_spec,
    spec_targets,
)
from pipeline.diffusion.processes import diffusion_loss, predict_x0
from pipeline.diffusion.schedule import NoiseSchedule
from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from pipeline.motion_data.skeleton import CONTROL_JOINTS, LOWER_BODY_ANCHORS
from services.checkpoint import Checkpoint, save_checkpoint
from services.trainer import TrainConfig, check_finite, ema_update, lr_at, make_optimizer, set_lr


@dataclass
class ControlTrainResult:
    state: ControlNetState
    ema_branch: ControlNetBranch
    checkpoint: Checkpoint
    history: pd.DataFrame


def control_loss(pred_m: torch.Tensor, target_m: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Squared error in meters averaged over constrained (frame, joint) sites only."""
    weight = mask.to(pred_m.dtype).expand_as(pred_m)
    return ((pred_m - target_m) ** 2 * weight).sum() / weight.sum().clamp_min(1.0)


def to_meters(coords: torch.Tensor, stats: NormalizationStats) -> torch.Tensor:
    mean = torch.as_tensor(stats.mean, dtype=coords.dtype, device=coords.device)
    std = torch.as_tensor(stats.std, dtype=coords.dtype, device=coords.device)
    return coords * std + mean


def draw_joint_set(rng: np.random.Generator, edit_prob: float) -> Tuple[int, ...]:
    """Either the lower-body anchors (editing) or one controllable joint."""
    if rng.random() < edit_prob:
        return LOWER_BODY_ANCHORS
    joints = sorted(CONTROL_JOINTS.values())
    return (int(joints[rng.integers(len(joints))]),)


def control_batch(
    motions: Sequence[MotionSequence],
    batch: dict,
    temporal_factor: int,
    stats: NormalizationStats,
    rng: np.random.Generator,
    edit_prob: float,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Control grids aligned with the windows of a diffusion batch.

    Returns (grid [B, L, N, 4], targets in meters [B, L, N, 3], site mask [B, L, N, 1])
    with L = latent frames * temporal_factor.
    """
    f = temporal_factor
    n_frames = batch["x0"].shape[1] * f
    grids, targets, masks = [], [], []
    for b, (i, start) in enumerate(zip(batch["idx"], batch["starts"])):
        coords = motions[i].coords
        raw_start = start * f
        raw_len = min(len(coords) - raw_start, int(batch["frame_mask"][b].sum()) * f)
        window = MotionSequence(coords[raw_start:raw_start + raw_len], fps=motions[i].fps)
        density = DENSITY_LEVELS[rng.integers(len(DENSITY_LEVELS))]
        spec = sample_control_spec(window, density, draw_joint_set(rng, edit_prob), rng)
        grids.append(encode_control(spec, n_frames, window.joints, stats).stacked())
        metric = spec_targets(spec, n_frames, window.joints)
        targets.append(metric.values)
        masks.append(metric.mask)
    return (torch.from_numpy(np.stack(grids)),
            torch.from_numpy(np.stack(targets)),
            torch.from_numpy(np.stack(masks)))


def snapshot(state: ControlNetState, ema: ControlNetBranch, optimizer: torch.optim.Optimizer,
             step: int, corpus: DiffusionCorpus, train_cfg: TrainConfig, control_weight: float,
             edit_prob: float, rng: np.random.Generator, gen: torch.Generator) -> Checkpoint:
    return Checkpoint(
        kind="controlnet",
        config={
            "model": state.frozen_main.cfg.to_dict(),
            "train": asdict(train_cfg),
            "codec": corpus.codec_name,
            "temporal_factor": corpus.temporal_factor,
            "control_weight": control_weight,
            "edit_prob": edit_prob,
        },
        state_dict=copy.deepcopy(state.branch.state_dict()),
        ema_state_dict=copy.deepcopy(ema.state_dict()),
        stats=corpus.stats.to_dict(),
        rng_state=rng_snapshot(rng, gen),
        optimizer_state=copy.deepcopy(optimizer.state_dict()),
        step=step,
        extra={"main_checksum": state.main_checksum},
    )


@timeit
def train_controlnet(
    corpus: DiffusionCorpus,
    motions: Sequence[MotionSequence],
    main: ACMDM,
    codec: Optional[LatentCodec] = None,
    train_cfg: Optional[TrainConfig] = None,
    control_weight: float = 1.0,
    edit_prob: float = 0.25,
    checkpoint_dir: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
    progress: bool = True,
) -> ControlTrainResult:
    """
    Train a ControlNet branch against a frozen backbone.

    `motions` are the corpus motions in meters, index-aligned with `corpus`.
    Loss per step is the masked diffusion loss plus control_weight times the
    squared keyframe error of the implied clean motion, decoded to meters.
    The backbone checksum is compared before and after training.
    """
    if len(motions) != len(corpus):
        raise ValueError(f"{len(motions)} motions for a corpus of {len(corpus)}")
    train_cfg = train_cfg or TrainConfig()
    codec = codec or IdentityCodec()
    if isinstance(codec, torch.nn.Module):
        codec.eval().requires_grad_(False)
    set_seed(train_cfg.seed)
    main.eval()
    state = ControlNetState(branch=ControlNetBranch(main, corpus.temporal_factor), frozen_main=main)
    branch = state.branch
    ema = copy.deepcopy(branch).requires_grad_(False)
    optimizer = make_optimizer(branch.parameters(), train_cfg)
    schedule = NoiseSchedule(kind=main.cfg.schedule)
    rng = np.random.default_rng(train_cfg.seed)
    gen = torch.Generator().manual_seed(train_cfg.seed)

    step = 0
    if resume is not None:
        if resume.extra.get("main_checksum") != state.main_checksum:
            raise ValueError("checkpoint was trained against a different backbone")
        branch.load_state_dict(resume.state_dict)
        ema.load_state_dict(resume.ema_state_dict)
        optimizer.load_state_dict(resume.optimizer_state)
        rng.bit_generator.state = resume.rng_state["numpy"]
        gen.set_state(resume.rng_state["torch"])
        step = resume.step

    steps_per_epoch = train_cfg.epoch_steps(len(corpus))
    total = train_cfg.epochs * steps_per_epoch
    last_path: Optional[str] = None
    rows = []
    branch.train()
    for step in tqdm(range(step, total), desc="train-controlnet", disable=not progress,
                     initial=step, total=total):
        batch = diffusion_batch(main, corpus, schedule, train_cfg, rng, gen)
        grid, target_m, site_mask = control_batch(
            motions, batch, corpus.temporal_factor, corpus.stats, rng, edit_prob
        )
        lr = lr_at(step, train_cfg)
        set_lr(optimizer, lr)

        feats = branch.encoder(grid)
        pred = controlled_forward(main, branch, batch["x_t"], batch["t"], batch["text"], feats,
                                  batch["frame_mask"])
        l_diff = diffusion_loss(pred, batch["target"], mask=batch["frame_mask"][:, :, None, None])
        x0_hat = predict_x0(main.objective, batch["x_t"], pred, batch["t"], schedule)
        coords = to_meters(codec.decode_from_diffusion(x0_hat, frames=grid.shape[1]), corpus.stats)
        l_ctrl = control_loss(coords, target_m, site_mask)
        loss = l_diff + control_weight * l_ctrl
        value = check_finite(loss, step, last_path)

        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        ema_update(ema, branch, train_cfg.ema_decay)
        rows.append({
            "step": step,
            "epoch": step // steps_per_epoch,
            "loss": value,
            "diffusion_loss": float(l_diff.detach()),
            "control_loss": float(l_ctrl.detach()),
            "lr": lr,
        })

        if checkpoint_dir is not None and (step + 1) % train_cfg.checkpoint_every == 0:
            ckpt = snapshot(state, ema, optimizer, step + 1, corpus, train_cfg, control_weight,
                            edit_prob, rng, gen)
            last_path = str(save_checkpoint(ckpt, Path(checkpoint_dir) / f"controlnet_step{step + 1}.pt"))

    state.verify_frozen()
    branch.eval()
    ema.eval()
    final = snapshot(state, ema, optimizer, total, corpus, train_cfg, control_weight, edit_prob, rng, gen)
    return ControlTrainResult(state=state, ema_branch=ema, checkpoint=final, history=pd.DataFrame(rows))


def controlnet_from_checkpoint(ckpt: Checkpoint, main: ACMDM, use_ema: bool = True) -> ControlNetState:
    """Attach a trained branch to `main`, which must be the backbone it was trained against."""
    main.eval()
    state = ControlNetState(branch=ControlNetBranch(main, ckpt.config["temporal_factor"]), frozen_main=main)
    if ckpt.extra.get("main_checksum") not in (None, state.main_checksum):
        raise ValueError("controlnet checkpoint was trained against a different backbone")
    weights = ckpt.ema_state_dict if use_ema and ckpt.ema_state_dict is not None else ckpt.state_dict
    state.branch.load_state_dict(weights)
    state.branch.eval()
    return state
