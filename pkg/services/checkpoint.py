"""
Versioned, self-describing checkpoint container (one file per trained module).
"""
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

CHECKPOINT_VERSION = 1
KINDS = ("ae", "acmdm", "controlnet", "mesh_ae", "evaluator")


@dataclass
class Checkpoint:
    kind: str
    config: Dict[str, Any]
    state_dict: Dict[str, torch.Tensor]
    ema_state_dict: Optional[Dict[str, torch.Tensor]] = None
    stats: Optional[Dict[str, Any]] = None
    rng_state: Optional[Dict[str, Any]] = None
    optimizer_state: Optional[Dict[str, Any]] = None
    step: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown checkpoint kind: {self.kind} (expected one of {KINDS})")


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(asdict(ckpt), path)
    print(f"💾 Saved {ckpt.kind} checkpoint (step {ckpt.step}) → {path}")
    return path


def load_checkpoint(path: Union[str, Path], kind: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    raw = torch.load(path, map_location="cpu", weights_only=False)
    if raw.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {raw.get('version')} in {path}, expected {CHECKPOINT_VERSION}"
        )
    ckpt = Checkpoint(**raw)
    if kind is not None and ckpt.kind != kind:
        raise ValueError(f"{path} holds a {ckpt.kind} checkpoint, expected {kind}")
    return ckpt
