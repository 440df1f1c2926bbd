import copy
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from misc.utility_functions import set_seed, timeit
from pipeline.motion_ae.config import AEConfig, AETrainConfig
from pipeline.motion_ae.loss import ae_loss
from pipeline.motion_ae.model import MotionAutoEncoder
from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from services.checkpoint import Checkpoint
from services.trainer import check_finite, fixed_windows, lr_at, make_optimizer, set_lr


def window_pool(lengths: Sequence[int], window: int, multiple: int) -> np.ndarray:
    """Indices of the sequences that cover a full window; shorter ones are left out of AE batches."""
    if window < multiple or window % multiple:
        raise ValueError(f"window {window} must be a positive multiple of {multiple}")
    lengths = np.asarray(lengths)
    pool = np.flatnonzero(lengths >= window)
    if not len(pool):
        raise ValueError(
            f"no sequence covers a {window}-frame window (longest has {lengths.max()} frames)"
        )
    if len(pool) < len(lengths):
        print(f"⚠️ {len(lengths) - len(pool)} of {len(lengths)} sequences are shorter than "
              f"{window} frames and are skipped for windowed training")
    return pool


@torch.no_grad()
def latent_statistics(model: MotionAutoEncoder, motions: Sequence[MotionSequence]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-channel mean/std of posterior-mean latents over every frame and joint."""
    model.eval()
    flat = []
    for m in motions:
        z = model.encode(torch.from_numpy(m.coords).unsqueeze(0), noise_scale=0.0).latent
        flat.append(z.reshape(-1, z.shape[-1]))
    flat = torch.cat(flat)
    return flat.mean(dim=0), flat.std(dim=0, unbiased=False)


@timeit
def train_ae(
    motions: List[MotionSequence],
    cfg: AEConfig,
    hyper: Optional[AETrainConfig] = None,
    progress: bool = True,
) -> Tuple[MotionAutoEncoder, pd.DataFrame]:
    """
    Train the motion AE on normalized motions with random fixed-length windows.

    Returns the model (latent statistics already stored) and a per-step history.
    """
    hyper = hyper or AETrainConfig()
    if not motions:
        raise ValueError("empty dataset")
    set_seed(hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    sequences = [m.coords for m in motions]
    pool = window_pool([len(s) for s in sequences], hyper.window, cfg.temporal_downsample)

    model = MotionAutoEncoder(cfg)
    optimizer = make_optimizer(model.parameters(), hyper)
    steps_per_epoch = hyper.epoch_steps(len(pool))

    rows = []
    step = 0
    model.train()
    for epoch in tqdm(range(hyper.epochs), desc="train-ae", disable=not progress):
        for _ in range(steps_per_epoch):
            x = fixed_windows(sequences, rng.choice(pool, hyper.batch_size), hyper.window, rng)
            lr = lr_at(step, hyper)
            set_lr(optimizer, lr)
            recon, enc = model(x)
            loss = ae_loss(x, recon, enc.mean, enc.logvar, kl_weight=cfg.kl_weight)
            value = check_finite(loss, step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            rows.append({"step": step, "epoch": epoch, "loss": value, "lr": lr})
            step += 1

    mean, std = latent_statistics(model, motions)
    model.set_latent_stats(mean, std)
    model.eval()
    print(f"✅ AE trained for {step} steps, final loss {rows[-1]['loss']:.5f}")
    return model, pd.DataFrame(rows)


@torch.no_grad()
def reconstruction_mse(model: MotionAutoEncoder, motions: Sequence[MotionSequence]) -> float:
    """Mean squared reconstruction error in normalized units over whole sequences."""
    model.eval()
    total, count = 0.0, 0
    for m in motions:
        x = torch.from_numpy(m.coords).unsqueeze(0)
        recon = model.decode(model.encode(x, noise_scale=0.0).latent, frames=m.frames)
        total += float(((recon - x) ** 2).sum())
        count += x.numel()
    return total / count


def ae_checkpoint(model: MotionAutoEncoder, stats: NormalizationStats, step: int = 0) -> Checkpoint:
    """Latent statistics travel inside the state dict as buffers."""
    return Checkpoint(
        kind="ae",
        config={"model": model.cfg.to_dict()},
        state_dict=copy.deepcopy(model.state_dict()),
        stats=stats.to_dict(),
        step=step,
    )


def ae_from_checkpoint(ckpt: Checkpoint) -> MotionAutoEncoder:
    model = MotionAutoEncoder(AEConfig(**ckpt.config["model"]))
    model.load_state_dict(ckpt.state_dict)
    return model.eval()
