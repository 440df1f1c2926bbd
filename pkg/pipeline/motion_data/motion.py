from dataclasses import dataclass, field, asdict
from typing import List, Literal

import numpy as np
import pandas as pd

Split = Literal["train", "val", "test"]
SPLITS = ("train", "val", "test")
DEFAULT_FPS = 20.0


@dataclass
class MotionSequence:
    """Absolute world-frame joint (or vertex) coordinates, [L, J, 3], Y up."""
    coords: np.ndarray
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float32)
        if self.coords.ndim != 3 or self.coords.shape[-1] != 3:
            raise ValueError(f"coords must be [L, J, 3], got {self.coords.shape}")
        if self.coords.shape[0] < 1 or self.coords.shape[1] < 1:
            raise ValueError(f"empty motion: {self.coords.shape}")
        if not np.isfinite(self.coords).all():
            raise ValueError("motion contains non-finite coordinates")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def joints(self) -> int:
        return self.coords.shape[1]

    def window(self, start: int, length: int) -> "MotionSequence":
        return MotionSequence(self.coords[start:start + length], fps=self.fps)


@dataclass
class NormalizationStats:
    """Channel-shared XYZ statistics; one mean and std per axis."""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(3)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(mean=np.array(d["mean"]), std=np.array(d["std"]))

    @classmethod
    def identity(cls) -> "NormalizationStats":
        return cls(mean=np.zeros(3), std=np.ones(3))


@dataclass(frozen=True)
class TextPrompt:
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("empty prompt")


@dataclass
class ManifestEntry:
    id: str
    motion_path: str
    captions: List[str]
    split: Split = "train"


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ValueError(f"duplicate manifest id: {e.id}")
            seen.add(e.id)
            if not e.captions:
                raise ValueError(f"manifest entry {e.id} has no caption")
            if e.split not in SPLITS:
                raise ValueError(f"manifest entry {e.id} has unknown split {e.split!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(e) for e in self.entries],
                            columns=["id", "motion_path", "captions", "split"])

    def select_split(self, split: Split) -> List[ManifestEntry]:
        df = self.to_frame()
        ids = set(df.loc[df["split"] == split, "id"])
        return [e for e in self.entries if e.id in ids]

    def to_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(entries=[ManifestEntry(**e) for e in d["entries"]])
