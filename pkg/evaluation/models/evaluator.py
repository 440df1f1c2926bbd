"""
Desk-scale text/motion embedding model for FID, R-Precision, Matching and
CLIP-style scores.

Both towers map into a shared unit-norm space and are trained jointly with a
symmetric InfoNCE loss. Captions repeated inside a batch share the positive
mass (soft targets), so identical descriptions are not pushed apart.
"""
import copy
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from tqdm import tqdm

from misc.utility_functions import set_seed, timeit
from pipeline.motion_data.motion import MotionSequence
from services.checkpoint import Checkpoint
from services.text_encoder import TEXT_DIM, TextEncoderInterface, encode_text
from services.trainer import TrainConfig, check_finite, collate_windows, lr_at, make_optimizer, set_lr


@dataclass
class EvaluatorConfig:
    embed_dim: int = 256
    hidden_dim: int = 256
    n_joints: int = 22
    text_dim: int = TEXT_DIM
    temperature: float = 0.07

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_config(cls, section: Dict, **overrides):
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class EvaluatorTrainConfig(TrainConfig):
    batch_size: int = 32
    lr: float = 1e-3
    warmup_steps: int = 100
    decay_step: int = 5_000
    epochs: int = 40
    steps_per_epoch: Optional[int] = 50


class MotionTower(nn.Module):
    """
    Normalized coordinates [B, L, J, 3] -> embedding, masked mean over frames.

    Padded frames are zeroed before every convolution, so a padded batch row
    embeds exactly like the same sequence passed alone.
    """

    def __init__(self, cfg: EvaluatorConfig):
        super().__init__()
        h = cfg.hidden_dim
        self.convs = nn.ModuleList([
            nn.Conv1d(cfg.n_joints * 3, h, kernel_size=3, padding=1),
            nn.Conv1d(h, h, kernel_size=3, padding=1),
            nn.Conv1d(h, h, kernel_size=3, padding=1),
        ])
        self.out = nn.Linear(h, cfg.embed_dim)

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = x.flatten(2).transpose(1, 2)   # [B, J*3, L]
        if frame_mask is None:
            w = torch.ones(h.shape[0], 1, h.shape[2], dtype=h.dtype, device=h.device)
        else:
            w = frame_mask.to(h.dtype).unsqueeze(1)
        for i, conv in enumerate(self.convs):
            h = conv(h * w)
            if i < len(self.convs) - 1:
                h = F.silu(h)
        pooled = (h * w).sum(dim=2) / w.sum(dim=2).clamp_min(1.0)
        return F.normalize(self.out(F.silu(pooled)), dim=-1)


class TextTower(nn.Module):
    def __init__(self, cfg: EvaluatorConfig):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(cfg.text_dim, cfg.hidden_dim), nn.SiLU(), nn.Linear(cfg.hidden_dim, cfg.embed_dim)
        )

    def forward(self, text: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.mlp(text), dim=-1)


class EvaluatorModel(nn.Module):
    def __init__(self, cfg: Optional[EvaluatorConfig] = None,
                 text_encoder: Optional[TextEncoderInterface] = None):
        super().__init__()
        self.cfg = cfg or EvaluatorConfig()
        self.motion_tower = MotionTower(self.cfg)
        self.text_tower = TextTower(self.cfg)
        self.text_encoder = text_encoder

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim

    @torch.no_grad()
    def embed_motions(self, motions: Sequence[MotionSequence]) -> np.ndarray:
        """Normalized motions -> [N, d_e]; each sequence is embedded whole."""
        self.eval()
        feats = [self.motion_tower(torch.from_numpy(m.coords).unsqueeze(0))[0] for m in motions]
        return torch.stack(feats).cpu().numpy().astype(np.float64)

    @torch.no_grad()
    def embed_texts(self, captions: Sequence[str]) -> np.ndarray:
        if self.text_encoder is None:
            raise ValueError("evaluator has no text encoder attached")
        self.eval()
        text = torch.from_numpy(np.stack([encode_text(self.text_encoder, c) for c in captions]))
        return self.text_tower(text).cpu().numpy().astype(np.float64)


def soft_info_nce(motion: torch.Tensor, text: torch.Tensor, caption_ids: torch.Tensor,
                  temperature: float) -> torch.Tensor:
    """Symmetric InfoNCE where every in-batch item with the same caption counts as positive."""
    logits = motion @ text.T / temperature
    same = (caption_ids[:, None] == caption_ids[None, :]).to(logits.dtype)
    targets = same / same.sum(dim=1, keepdim=True)
    m2t = -(targets * F.log_softmax(logits, dim=1)).sum(dim=1).mean()
    t2m = -(targets * F.log_softmax(logits.T, dim=1)).sum(dim=1).mean()
    return 0.5 * (m2t + t2m)


@timeit
def train_evaluator(
    motions: Sequence[MotionSequence],
    captions: Sequence[Sequence[str]],
    text_encoder: TextEncoderInterface,
    cfg: Optional[EvaluatorConfig] = None,
    hyper: Optional[EvaluatorTrainConfig] = None,
    progress: bool = True,
) -> Tuple[EvaluatorModel, pd.DataFrame]:
    """Contrastive training on (normalized motion, caption) pairs."""
    cfg = cfg or EvaluatorConfig()
    hyper = hyper or EvaluatorTrainConfig()
    if len(motions) != len(captions):
        raise ValueError(f"{len(motions)} motions for {len(captions)} caption lists")
    vocabulary: List[str] = sorted({c for caps in captions for c in caps})
    if len(vocabulary) < 2:
        raise ValueError(f"need at least 2 distinct captions, got {len(vocabulary)}")
    caption_index = {c: i for i, c in enumerate(vocabulary)}
    text_table = torch.from_numpy(np.stack([encode_text(text_encoder, c) for c in vocabulary]))

    set_seed(hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    model = EvaluatorModel(cfg, text_encoder)
    optimizer = make_optimizer(
        list(model.motion_tower.parameters()) + list(model.text_tower.parameters()), hyper
    )
    sequences = [m.coords for m in motions]
    steps_per_epoch = hyper.epoch_steps(len(motions))

    rows = []
    step = 0
    model.train()
    for epoch in tqdm(range(hyper.epochs), desc="train-evaluator", disable=not progress):
        for _ in range(steps_per_epoch):
            idx = rng.choice(len(sequences), size=min(hyper.batch_size, len(sequences)), replace=False)
            x, mask = collate_windows(sequences, idx, hyper.max_frames, rng)
            ids = torch.tensor([caption_index[captions[i][rng.integers(len(captions[i]))]] for i in idx])
            lr = lr_at(step, hyper)
            set_lr(optimizer, lr)
            loss = soft_info_nce(model.motion_tower(x, mask), model.text_tower(text_table[ids]), ids,
                                 cfg.temperature)
            value = check_finite(loss, step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            rows.append({"step": step, "epoch": epoch, "loss": value, "lr": lr})
            step += 1

    model.eval()
    print(f"✅ Evaluator trained for {step} steps, final loss {rows[-1]['loss']:.4f}")
    return model, pd.DataFrame(rows)


def evaluator_checkpoint(model: EvaluatorModel, text_encoder_name: str) -> Checkpoint:
    return Checkpoint(
        kind="evaluator",
        config={"model": model.cfg.to_dict(), "text_encoder": text_encoder_name},
        state_dict=copy.deepcopy(model.state_dict()),
    )


def evaluator_from_checkpoint(ckpt: Checkpoint, text_encoder: TextEncoderInterface) -> EvaluatorModel:
    model = EvaluatorModel(EvaluatorConfig(**ckpt.config["model"]), text_encoder)
    model.load_state_dict(ckpt.state_dict)
    return model.eval()
