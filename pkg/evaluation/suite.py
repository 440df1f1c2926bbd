"""
Repeated evaluation of a text-to-motion generator.

Every repetition draws its own test subset, prompts and sampling seeds;
the report holds the mean of each metric and the half-width of its 95%
normal-approximation interval across repetitions.
"""
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd

from evaluation.metrics import (
    aggregate_control_errors,
    constraint_errors,
    cosine_score,
    diversity,
    fid,
    foot_skating_ratio,
    multimodality,
    r_precision_and_matching,
)
from misc.utility_functions import timeit
from pipeline.control.spec import DENSITY_LEVELS, ControlSpec, sample_control_spec
from pipeline.mesh.laplacian import lsd
from pipeline.mesh.topology import MeshSequence, MeshTopology
from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from pipeline.motion_data.normalization import normalize
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON

CI_Z = 1.96
RATIO_METRICS = ("top1", "top2", "top3", "foot_skating", "traj_err", "loc_err")


class MotionGenerator(Protocol):
    """What the suite needs from a trained system; motions are returned in meters."""
    stats: NormalizationStats

    @property
    def has_control(self) -> bool: ...

    @property
    def has_mesh(self) -> bool: ...

    def generate_batch(self, prompts: Sequence[str], frames: Sequence[int], seed: int) -> List[MotionSequence]: ...

    def generate_controlled(self, prompt: str, spec: ControlSpec, frames: int, seed: int) -> MotionSequence: ...

    def generate_mesh(self, prompt: str, frames: int, seed: int) -> MeshSequence: ...

    @property
    def mesh_topology(self) -> MeshTopology: ...

    @property
    def mesh_tpose(self) -> np.ndarray: ...


@dataclass
class EvaluationProtocol:
    repetitions: int = 20
    n_samples: int = 64
    pool_size: int = 32
    diversity_pairs: int = 300
    mm_prompts: int = 8
    mm_repeats: int = 10
    mm_pairs: int = 5
    control_joints: Tuple[str, ...] = ("pelvis",)
    control_samples: int = 16
    densities: Tuple[float, ...] = DENSITY_LEVELS
    mesh_samples: int = 4
    seed: int = 0

    def __post_init__(self):
        self.control_joints = tuple(self.control_joints)
        self.densities = tuple(float(d) for d in self.densities)
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.n_samples < self.pool_size:
            raise ValueError(f"n_samples ({self.n_samples}) cannot fill a pool of {self.pool_size}")
        if self.mm_repeats < 2 * self.mm_pairs:
            raise ValueError(f"{self.mm_repeats} repeats cannot give {self.mm_pairs} disjoint pairs")
        unknown = set(self.densities) - set(DENSITY_LEVELS)
        if unknown:
            raise ValueError(f"densities {sorted(unknown)} not in {DENSITY_LEVELS}")
        for name in self.control_joints:
            HUMANML3D_SKELETON.index(name)

    @classmethod
    def from_config(cls, section: Dict, **overrides):
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in section.items() if k in known}
        if "control_joint" in section and "control_joints" not in section:
            values["control_joints"] = (section["control_joint"],)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class MetricReport:
    fid: float
    r_precision: Tuple[float, float, float]
    matching: float
    diversity: float
    multimodality: float
    clip_score: float
    foot_skating: float
    aits: float
    traj_err: Optional[float] = None
    loc_err: Optional[float] = None
    avg_err: Optional[float] = None
    lsd: Optional[float] = None
    ci: Dict[str, float] = field(default_factory=dict)
    per_density: Dict[str, Dict[str, float]] = field(default_factory=dict)
    per_joint: Dict[str, Dict[str, float]] = field(default_factory=dict)
    repetitions: int = 1

    def __post_init__(self):
        self.r_precision = tuple(float(v) for v in self.r_precision)
        self.validate()

    def validate(self) -> None:
        if len(self.r_precision) != 3:
            raise ValueError(f"r_precision needs three values, got {len(self.r_precision)}")
        top1, top2, top3 = self.r_precision
        if not top1 <= top2 <= top3:
            raise ValueError(f"R-Precision must be non-decreasing in k, got {self.r_precision}")
        ratios = {"top1": top1, "top2": top2, "top3": top3, "foot_skating": self.foot_skating,
                  "traj_err": self.traj_err, "loc_err": self.loc_err}
        for name, value in ratios.items():
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not -1.0 <= self.clip_score <= 1.0:
            raise ValueError(f"clip_score must lie in [-1, 1], got {self.clip_score}")
        for name in ("fid", "matching", "diversity", "multimodality", "aits"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["r_precision"] = list(self.r_precision)
        return d

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: Dict) -> "MetricReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def summary_rows(self) -> List[Tuple[str, float, Optional[float]]]:
        """(metric, mean, CI half-width) in the fixed reporting order."""
        rows = [
            ("FID", self.fid, self.ci.get("fid")),
            ("Top-1", self.r_precision[0], self.ci.get("top1")),
            ("Top-2", self.r_precision[1], self.ci.get("top2")),
            ("Top-3", self.r_precision[2], self.ci.get("top3")),
            ("Matching", self.matching, self.ci.get("matching")),
            ("Diversity", self.diversity, self.ci.get("diversity")),
            ("MModality", self.multimodality, self.ci.get("multimodality")),
            ("CLIP-score", self.clip_score, self.ci.get("clip_score")),
            ("Foot skating", self.foot_skating, self.ci.get("foot_skating")),
        ]
        for label, name in (("Traj. err", "traj_err"), ("Loc. err", "loc_err"),
                            ("Avg. err", "avg_err"), ("LSD", "lsd")):
            value = getattr(self, name)
            if value is not None:
                rows.append((label, value, self.ci.get(name)))
        rows.append(("AITS (s)", self.aits, self.ci.get("aits")))
        return rows


def ci_halfwidth(values: Sequence[float], z: float = CI_Z) -> float:
    """z * sd / sqrt(n) with the population sd; 0 for a single value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(z * values.std() / math.sqrt(values.size))


def repetition_seeds(seed: int, repetitions: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(repetitions)]


@timeit
def _timed_batch(generator: MotionGenerator, prompts: List[str], frames: List[int], seed: int) -> List[MotionSequence]:
    return generator.generate_batch(prompts, frames, seed)


def _control_columns(
    generator: MotionGenerator,
    test_motions: Sequence[MotionSequence],
    captions: Sequence[Sequence[str]],
    protocol: EvaluationProtocol,
    rng: np.random.Generator,
    seed: int,
) -> Dict[str, float]:
    row: Dict[str, float] = {}
    per_density: Dict[float, List[np.ndarray]] = {d: [] for d in protocol.densities}
    per_joint: Dict[str, List[np.ndarray]] = {j: [] for j in protocol.control_joints}
    k = 0
    for density in protocol.densities:
        for name in protocol.control_joints:
            joint = HUMANML3D_SKELETON.index(name)
            for i in rng.choice(len(test_motions), size=protocol.control_samples,
                                replace=protocol.control_samples > len(test_motions)):
                gt = test_motions[i]
                spec = sample_control_spec(gt, density, (joint,), rng)
                prompt = captions[i][rng.integers(len(captions[i]))]
                m = generator.generate_controlled(prompt, spec, gt.frames, seed + k)
                errors = constraint_errors(m, spec)
                per_density[density].append(errors)
                per_joint[name].append(errors)
                k += 1

    density_scores = []
    for density, errs in per_density.items():
        traj, loc, avg = aggregate_control_errors(errs)
        row.update({f"traj_err@{density:g}": traj, f"loc_err@{density:g}": loc, f"avg_err@{density:g}": avg})
        density_scores.append((traj, loc, avg))
    for name, errs in per_joint.items():
        traj, loc, avg = aggregate_control_errors(errs)
        row.update({f"traj_err@{name}": traj, f"loc_err@{name}": loc, f"avg_err@{name}": avg})
    row["traj_err"], row["loc_err"], row["avg_err"] = np.mean(density_scores, axis=0).tolist()
    return row


def evaluate_repetition(
    generator: MotionGenerator,
    test_motions: Sequence[MotionSequence],
    captions: Sequence[Sequence[str]],
    real_feats: np.ndarray,
    evaluator,
    protocol: EvaluationProtocol,
    seed: int,
) -> Dict[str, float]:
    rng = np.random.default_rng(seed)
    n = protocol.n_samples
    idx = rng.choice(len(test_motions), size=n, replace=n > len(test_motions))
    prompts = [captions[i][rng.integers(len(captions[i]))] for i in idx]
    frames = [test_motions[i].frames for i in idx]

    generated = _timed_batch(generator, prompts, frames, seed)
    aits = _timed_batch.last_elapsed / n
    gen_feats = evaluator.embed_motions([normalize(m, generator.stats) for m in generated])
    text_feats = evaluator.embed_texts(prompts)

    top1, top2, top3, matching = r_precision_and_matching(gen_feats, text_feats, protocol.pool_size, rng)
    row = {
        "fid": fid(real_feats[idx], gen_feats),
        "top1": top1,
        "top2": top2,
        "top3": top3,
        "matching": matching,
        "diversity": diversity(gen_feats, min(protocol.diversity_pairs, n // 2), rng),
        "clip_score": cosine_score(gen_feats, text_feats),
        "foot_skating": float(np.mean([foot_skating_ratio(m) for m in generated])),
        "aits": aits,
    }

    mm_feats = []
    for j in range(min(protocol.mm_prompts, n)):
        batch = generator.generate_batch([prompts[j]] * protocol.mm_repeats, [frames[j]] * protocol.mm_repeats,
                                         seed + 1 + j)
        mm_feats.append(evaluator.embed_motions([normalize(m, generator.stats) for m in batch]))
    row["multimodality"] = multimodality(mm_feats, protocol.mm_pairs, rng)

    if generator.has_control:
        row.update(_control_columns(generator, test_motions, captions, protocol, rng, seed))

    if generator.has_mesh and protocol.mesh_samples > 0:
        topology, tpose = generator.mesh_topology, generator.mesh_tpose
        row["lsd"] = float(np.mean([
            lsd(generator.generate_mesh(prompts[j % n], frames[j % n], seed + j), tpose, topology)
            for j in range(protocol.mesh_samples)
        ]))
    return row


def _report_from_frame(df: pd.DataFrame) -> MetricReport:
    means = df.mean(numeric_only=True)
    ci = {col: ci_halfwidth(df[col].to_numpy()) for col in df.columns if col != "repetition"}

    def optional(name: str) -> Optional[float]:
        return float(means[name]) if name in means else None

    per_density, per_joint = {}, {}
    for col in df.columns:
        if "@" not in col:
            continue
        metric, key = col.split("@", 1)
        target = per_joint if key in HUMANML3D_SKELETON.names else per_density
        target.setdefault(key, {})[metric] = float(means[col])

    # Means of ratios can drift past 1 by rounding only.
    def ratio(name: str) -> Optional[float]:
        value = optional(name)
        return None if value is None else float(np.clip(value, 0.0, 1.0))

    top = np.maximum.accumulate([ratio("top1"), ratio("top2"), ratio("top3")])
    return MetricReport(
        fid=float(means["fid"]),
        r_precision=tuple(top),
        matching=float(means["matching"]),
        diversity=float(means["diversity"]),
        multimodality=float(means["multimodality"]),
        clip_score=float(np.clip(means["clip_score"], -1.0, 1.0)),
        foot_skating=ratio("foot_skating"),
        aits=float(means["aits"]),
        traj_err=ratio("traj_err"),
        loc_err=ratio("loc_err"),
        avg_err=optional("avg_err"),
        lsd=optional("lsd"),
        ci=ci,
        per_density=per_density,
        per_joint=per_joint,
        repetitions=len(df),
    )


@timeit
def evaluate_suite(
    generator: MotionGenerator,
    test_motions: Sequence[MotionSequence],
    captions: Sequence[Sequence[str]],
    evaluator,
    protocol: Optional[EvaluationProtocol] = None,
) -> Tuple[MetricReport, pd.DataFrame]:
    """
    Run `protocol.repetitions` independent repetitions.

    `test_motions` are in meters; real features are embedded once and
    indexed per repetition. Returns the report and the per-repetition table.
    """
    protocol = protocol or EvaluationProtocol()
    if len(test_motions) != len(captions):
        raise ValueError(f"{len(test_motions)} test motions for {len(captions)} caption lists")
    if not test_motions:
        raise ValueError("empty test set")
    real_feats = evaluator.embed_motions([normalize(m, generator.stats) for m in test_motions])

    rows = []
    for r, seed in enumerate(repetition_seeds(protocol.seed, protocol.repetitions)):
        row = evaluate_repetition(generator, test_motions, captions, real_feats, evaluator, protocol, seed)
        rows.append({"repetition": r, **row})
        print(f"✅ Repetition {r + 1}/{protocol.repetitions}: FID {row['fid']:.3f}, Top-1 {row['top1']:.3f}")
    df = pd.DataFrame(rows)
    return _report_from_frame(df), df
