from typing import Sequence

import numpy as np

from pipeline.motion_data.motion import MotionSequence, NormalizationStats

EPS_STD = 1e-6


def compute_stats(dataset: Sequence[MotionSequence]) -> NormalizationStats:
    """
    Per-axis mean/std pooled over every frame, joint and sequence.

    Statistics are shared across joints so that one normalized value always
    means the same physical position along an axis. Population variance.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    flat = np.concatenate([m.coords.reshape(-1, 3).astype(np.float64) for m in dataset], axis=0)
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0, ddof=0), EPS_STD)
    return NormalizationStats(mean=mean, std=std)


def _check(coords: np.ndarray) -> None:
    if coords.ndim != 3 or coords.shape[-1] != 3:
        raise ValueError(f"expected [L, J, 3] coordinates, got {coords.shape}")


def normalize_array(coords: np.ndarray, s: NormalizationStats) -> np.ndarray:
    _check(coords)
    return ((coords - s.mean) / s.std).astype(np.float32)


def denormalize_array(coords: np.ndarray, s: NormalizationStats) -> np.ndarray:
    _check(coords)
    return (coords * s.std + s.mean).astype(np.float32)


def normalize(m: MotionSequence, s: NormalizationStats) -> MotionSequence:
    return MotionSequence(normalize_array(m.coords, s), fps=m.fps)


def denormalize(m: MotionSequence, s: NormalizationStats) -> MotionSequence:
    return MotionSequence(denormalize_array(m.coords, s), fps=m.fps)
