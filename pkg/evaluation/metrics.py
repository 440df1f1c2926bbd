"""
Motion generation metrics over embeddings and absolute coordinates.

Embedding metrics take plain [N, d] arrays so they can be checked against
closed forms; motion metrics read meters directly.
"""
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from pipeline.control.spec import ControlSpec
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.skeleton import FOOT_JOINTS

FID_EPS = 1e-6
FOOT_HEIGHT_THRESHOLD = 0.05    # m
FOOT_SLIDE_THRESHOLD = 0.025    # m per frame
CONTROL_SUCCESS_THRESHOLD = 0.5  # m


# ---------------------------------------------------------------------------
# Distribution metrics
# ---------------------------------------------------------------------------
def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = eigh((m + m.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(real_feats: np.ndarray, gen_feats: np.ndarray) -> float:
    """Frechet distance between Gaussian fits; covariances regularized by FID_EPS * I."""
    if len(real_feats) < 2 or len(gen_feats) < 2:
        raise ValueError(f"need at least 2 samples per set, got {len(real_feats)} and {len(gen_feats)}")
    real = np.asarray(real_feats, dtype=np.float64)
    gen = np.asarray(gen_feats, dtype=np.float64)
    d = real.shape[1]
    cov_r = np.atleast_2d(np.cov(real, rowvar=False)) + FID_EPS * np.eye(d)
    cov_g = np.atleast_2d(np.cov(gen, rowvar=False)) + FID_EPS * np.eye(d)
    sqrt_r = _sqrtm_psd(cov_r)
    inner = sqrt_r @ cov_g @ sqrt_r
    w = eigh((inner + inner.T) / 2.0, eigvals_only=True)
    tr_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = real.mean(axis=0) - gen.mean(axis=0)
    return float(max(diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * tr_sqrt, 0.0))


# ---------------------------------------------------------------------------
# Retrieval metrics
# ---------------------------------------------------------------------------
def r_precision_and_matching(
    motion_feats: np.ndarray,
    text_feats: np.ndarray,
    pool_size: int = 32,
    rng: np.random.Generator = None,
) -> Tuple[float, float, float, float]:
    """
    Shuffle the aligned pairs into pools of `pool_size`; inside each pool every
    motion ranks all pool captions by Euclidean distance.

    Returns (top1, top2, top3, matching) where matching is the mean distance of
    the true pairs. Pairs left over after the last full pool are dropped.
    """
    if motion_feats.shape != text_feats.shape:
        raise ValueError(f"shape mismatch: {motion_feats.shape} vs {text_feats.shape}")
    n = len(motion_feats)
    if n < pool_size:
        raise ValueError(f"{n} pairs cannot fill a pool of {pool_size}")
    order = np.arange(n) if rng is None else rng.permutation(n)
    hits = np.zeros(3)
    matched = []
    n_pools = n // pool_size
    for p in range(n_pools):
        sel = order[p * pool_size:(p + 1) * pool_size]
        dist = cdist(motion_feats[sel], text_feats[sel])
        true = np.diag(dist)
        rank = (dist < true[:, None]).sum(axis=1)
        for k in range(3):
            hits[k] += (rank <= k).sum()
        matched.append(true)
    top = hits / (n_pools * pool_size)
    return float(top[0]), float(top[1]), float(top[2]), float(np.concatenate(matched).mean())


def cosine_score(motion_feats: np.ndarray, text_feats: np.ndarray) -> float:
    """Mean cosine similarity of aligned rows."""
    if motion_feats.shape != text_feats.shape:
        raise ValueError(f"shape mismatch: {motion_feats.shape} vs {text_feats.shape}")
    a = motion_feats / np.linalg.norm(motion_feats, axis=1, keepdims=True).clip(1e-12)
    b = text_feats / np.linalg.norm(text_feats, axis=1, keepdims=True).clip(1e-12)
    return float(np.clip((a * b).sum(axis=1), -1.0, 1.0).mean())


def clip_score(motions: Sequence[MotionSequence], captions: Sequence[str], evaluator) -> float:
    """Cosine agreement between each (normalized) motion and its caption under the evaluator."""
    if len(motions) != len(captions):
        raise ValueError(f"{len(motions)} motions for {len(captions)} captions")
    return cosine_score(evaluator.embed_motions(motions), evaluator.embed_texts(captions))


# ---------------------------------------------------------------------------
# Variability metrics
# ---------------------------------------------------------------------------
def draw_disjoint_pairs(n: int, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """[n_pairs, 2] indices, no index used twice."""
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    if 2 * n_pairs > n:
        raise ValueError(f"{n} samples are not enough for {n_pairs} disjoint pairs")
    return rng.permutation(n)[:2 * n_pairs].reshape(n_pairs, 2)


def diversity(feats: np.ndarray, n_pairs: int = 300, rng: np.random.Generator = None) -> float:
    rng = rng if rng is not None else np.random.default_rng(0)
    pairs = draw_disjoint_pairs(len(feats), n_pairs, rng)
    return float(np.linalg.norm(feats[pairs[:, 0]] - feats[pairs[:, 1]], axis=1).mean())


def multimodality(feats_per_prompt: Sequence[np.ndarray], n_pairs: int = 5,
                  rng: np.random.Generator = None) -> float:
    """Diversity within each prompt's generations, averaged over prompts."""
    if len(feats_per_prompt) == 0:
        raise ValueError("no prompts")
    rng = rng if rng is not None else np.random.default_rng(0)
    return float(np.mean([diversity(f, n_pairs, rng) for f in feats_per_prompt]))


# ---------------------------------------------------------------------------
# Physical and control metrics
# ---------------------------------------------------------------------------
def foot_skating_ratio(
    m: MotionSequence,
    foot_joints: Sequence[int] = FOOT_JOINTS,
    height_threshold: float = FOOT_HEIGHT_THRESHOLD,
    slide_threshold: float = FOOT_SLIDE_THRESHOLD,
) -> float:
    """Share of frame transitions in which a grounded foot slides horizontally."""
    if m.frames < 2:
        return 0.0
    feet = m.coords[:, list(foot_joints)].astype(np.float64)       # [L, F, 3]
    grounded = feet[:-1, :, 1] < height_threshold
    slide = np.linalg.norm(feet[1:][..., [0, 2]] - feet[:-1][..., [0, 2]], axis=-1)
    skating = (grounded & (slide > slide_threshold)).any(axis=1)
    return float(skating.sum() / (m.frames - 1))


def constraint_errors(m: MotionSequence, spec: ControlSpec) -> np.ndarray:
    """Euclidean error in meters of every constraint, in spec order."""
    spec.validate(m.frames, m.joints)
    if not spec.constraints:
        return np.zeros(0)
    frames = np.array([c.frame for c in spec.constraints])
    joints = np.array([c.joint for c in spec.constraints])
    targets = np.array([c.target for c in spec.constraints], dtype=np.float64)
    return np.linalg.norm(m.coords[frames, joints].astype(np.float64) - targets, axis=1)


def control_errors(m: MotionSequence, spec: ControlSpec,
                   threshold: float = CONTROL_SUCCESS_THRESHOLD) -> Tuple[float, float, float]:
    """(traj_err, loc_err, avg_err) for one sequence."""
    return aggregate_control_errors([constraint_errors(m, spec)], threshold)


def aggregate_control_errors(per_sequence: List[np.ndarray],
                             threshold: float = CONTROL_SUCCESS_THRESHOLD) -> Tuple[float, float, float]:
    """
    traj_err: share of sequences with any constraint beyond `threshold`;
    loc_err: share of constraints beyond it; avg_err: mean constraint error.
    """
    if not per_sequence:
        raise ValueError("no sequences")
    traj = float(np.mean([(e > threshold).any() for e in per_sequence]))
    flat = np.concatenate(per_sequence)
    if flat.size == 0:
        return traj, 0.0, 0.0
    return traj, float((flat > threshold).mean()), float(flat.mean())
