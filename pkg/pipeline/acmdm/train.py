import copy
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from misc.utility_functions import set_seed, timeit
from pipeline.acmdm.codec import IdentityCodec, LatentCodec
from pipeline.acmdm.config import ACMDMConfig
from pipeline.acmdm.model import ACMDM, parameter_count
from pipeline.diffusion.processes import diffusion_loss, forward_process, make_target, sample_timesteps
from pipeline.diffusion.schedule import NoiseSchedule
from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from services.checkpoint import Checkpoint, save_checkpoint
from services.text_encoder import TextEncoderInterface, encode_text
from services.trainer import (
    TrainConfig,
    check_finite,
    collate_windows,
    ema_update,
    lr_at,
    make_optimizer,
    set_lr,
)


@dataclass
class DiffusionCorpus:
    """Sequences already in diffusion space plus pre-encoded captions."""
    sequences: List[np.ndarray]      # [l, N, d] each
    text: List[np.ndarray]           # [n_captions, d_c] each
    captions: List[List[str]]
    stats: NormalizationStats
    codec_name: str = "raw"
    temporal_factor: int = 1

    def __len__(self) -> int:
        return len(self.sequences)


@torch.no_grad()
def build_corpus(
    motions: Sequence[MotionSequence],
    captions: Sequence[Sequence[str]],
    text_encoder: TextEncoderInterface,
    stats: NormalizationStats,
    codec: Optional[LatentCodec] = None,
) -> DiffusionCorpus:
    """`motions` must already be normalized with `stats`."""
    if len(motions) != len(captions):
        raise ValueError(f"{len(motions)} motions for {len(captions)} caption lists")
    if not motions:
        raise ValueError("empty dataset")
    codec = codec or IdentityCodec()
    sequences = [
        codec.encode_for_diffusion(torch.from_numpy(m.coords).unsqueeze(0))[0].cpu().numpy()
        for m in motions
    ]
    text = [np.stack([encode_text(text_encoder, c) for c in caps]) for caps in captions]
    return DiffusionCorpus(sequences, text, [list(c) for c in captions], stats,
                           codec_name=codec.name, temporal_factor=codec.temporal_factor)


@dataclass
class TrainResult:
    model: ACMDM
    ema: ACMDM
    checkpoint: Checkpoint
    history: pd.DataFrame


def rng_snapshot(rng: np.random.Generator, gen: torch.Generator) -> dict:
    return {"numpy": copy.deepcopy(rng.bit_generator.state), "torch": gen.get_state()}


def snapshot(model: ACMDM, ema: ACMDM, optimizer: torch.optim.Optimizer, step: int,
             corpus: DiffusionCorpus, train_cfg: TrainConfig,
             rng: np.random.Generator, gen: torch.Generator, text_encoder_name: str) -> Checkpoint:
    return Checkpoint(
        kind="acmdm",
        config={
            "model": model.cfg.to_dict(),
            "train": asdict(train_cfg),
            "codec": corpus.codec_name,
            "text_encoder": text_encoder_name,
        },
        state_dict=copy.deepcopy(model.state_dict()),
        ema_state_dict=copy.deepcopy(ema.state_dict()),
        stats=corpus.stats.to_dict(),
        rng_state=rng_snapshot(rng, gen),
        optimizer_state=copy.deepcopy(optimizer.state_dict()),
        step=step,
    )


def diffusion_batch(
    model: ACMDM,
    corpus: DiffusionCorpus,
    schedule: NoiseSchedule,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
    gen: torch.Generator,
) -> dict:
    """Draw one noised training batch; shared with control training."""
    idx = rng.integers(0, len(corpus), train_cfg.batch_size)
    max_len = math.ceil(train_cfg.max_frames / corpus.temporal_factor)
    x0, frame_mask, starts = collate_windows(corpus.sequences, idx, max_len, rng, return_starts=True)
    text = torch.from_numpy(np.stack([corpus.text[i][rng.integers(len(corpus.text[i]))] for i in idx]))
    text = model.drop_text(text, train_cfg.text_drop_prob, generator=gen)
    t = sample_timesteps(schedule, len(idx), generator=gen)
    eps = torch.randn(x0.shape, generator=gen)
    return {
        "idx": idx,
        "starts": starts,
        "x0": x0,
        "frame_mask": frame_mask,
        "text": text,
        "t": t.float(),
        "eps": eps,
        "x_t": forward_process(x0, t, eps, schedule),
        "target": make_target(model.objective, x0, eps),
    }


@timeit
def train_acmdm(
    corpus: DiffusionCorpus,
    model_cfg: ACMDMConfig,
    train_cfg: Optional[TrainConfig] = None,
    text_encoder_name: str = "hashbag",
    checkpoint_dir: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
    progress: bool = True,
) -> TrainResult:
    """
    Train the denoiser on a prepared corpus.

    Per step: draw windows, sample timestep and noise, regress the objective's
    target with masked MSE, step AdamW, update the EMA copy.
    """
    train_cfg = train_cfg or TrainConfig()
    set_seed(train_cfg.seed)
    schedule = NoiseSchedule(kind=model_cfg.schedule)
    model = ACMDM(model_cfg)
    print(f"🧮 ACMDM-{model_cfg.size} ({model_cfg.objective.value}/{model_cfg.schedule}): "
          f"{parameter_count(model) / 1e6:.2f}M parameters")
    ema = copy.deepcopy(model).requires_grad_(False)
    optimizer = make_optimizer(model.parameters(), train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    gen = torch.Generator().manual_seed(train_cfg.seed)

    step = 0
    if resume is not None:
        model.load_state_dict(resume.state_dict)
        ema.load_state_dict(resume.ema_state_dict)
        optimizer.load_state_dict(resume.optimizer_state)
        rng.bit_generator.state = resume.rng_state["numpy"]
        gen.set_state(resume.rng_state["torch"])
        step = resume.step

    steps_per_epoch = train_cfg.epoch_steps(len(corpus))
    total = train_cfg.epochs * steps_per_epoch
    last_path: Optional[str] = None
    rows = []
    model.train()
    for step in tqdm(range(step, total), desc="train-acmdm", disable=not progress,
                     initial=step, total=total):
        batch = diffusion_batch(model, corpus, schedule, train_cfg, rng, gen)
        lr = lr_at(step, train_cfg)
        set_lr(optimizer, lr)
        pred = model(batch["x_t"], batch["t"], batch["text"], batch["frame_mask"])
        loss = diffusion_loss(pred, batch["target"], mask=batch["frame_mask"][:, :, None, None])
        value = check_finite(loss, step, last_path)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        ema_update(ema, model, train_cfg.ema_decay)
        rows.append({"step": step, "epoch": step // steps_per_epoch, "loss": value, "lr": lr})

        if checkpoint_dir is not None and (step + 1) % train_cfg.checkpoint_every == 0:
            ckpt = snapshot(model, ema, optimizer, step + 1, corpus, train_cfg, rng, gen, text_encoder_name)
            last_path = str(save_checkpoint(ckpt, Path(checkpoint_dir) / f"acmdm_step{step + 1}.pt"))

    model.eval()
    ema.eval()
    final = snapshot(model, ema, optimizer, total, corpus, train_cfg, rng, gen, text_encoder_name)
    return TrainResult(model=model, ema=ema, checkpoint=final, history=pd.DataFrame(rows))


def acmdm_from_checkpoint(ckpt: Checkpoint, use_ema: bool = True) -> ACMDM:
    """Rebuild the denoiser; EMA weights are the evaluation weights."""
    model = ACMDM(ACMDMConfig.from_dict(ckpt.config["model"]))
    state = ckpt.ema_state_dict if use_ema and ckpt.ema_state_dict is not None else ckpt.state_dict
    model.load_state_dict(state)
    return model.eval()
