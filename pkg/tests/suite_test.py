import json
from typing import List, Sequence

import numpy as np
import pytest

from evaluation.models.evaluator import EvaluatorConfig, EvaluatorModel
from evaluation.suite import (
    EvaluationProtocol,
    MetricReport,
    ci_halfwidth,
    evaluate_suite,
    repetition_seeds,
)
from pipeline.control.spec import ControlSpec
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.normalization import compute_stats


class ReplayGenerator:
    """Answers every prompt with the test motion it was written for."""

    has_control = True
    has_mesh = False

    def __init__(self, motions: Sequence[MotionSequence], prompts: Sequence[str]):
        self.by_prompt = dict(zip(prompts, motions))
        self.stats = compute_stats(motions)

    def generate_batch(self, prompts: Sequence[str], frames: Sequence[int], seed: int) -> List[MotionSequence]:
        return [self.by_prompt[p] for p in prompts]

    def generate_controlled(self, prompt: str, spec: ControlSpec, frames: int, seed: int) -> MotionSequence:
        coords = np.zeros((frames, 22, 3), dtype=np.float32)
        for c in spec.constraints:
            coords[c.frame, c.joint] = c.target
        return MotionSequence(coords)


@pytest.fixture(scope="module")
def replay(small_corpus, text_encoder):
    motions, _ = small_corpus
    captions = [[f"recording number {i}"] for i in range(len(motions))]
    generator = ReplayGenerator(motions, [c[0] for c in captions])
    evaluator = EvaluatorModel(EvaluatorConfig(embed_dim=16, hidden_dim=16), text_encoder=text_encoder)
    return motions, captions, generator, evaluator


def _protocol(**kwargs) -> EvaluationProtocol:
    values = dict(repetitions=2, n_samples=8, pool_size=4, diversity_pairs=3, mm_prompts=2, mm_repeats=2,
                  mm_pairs=1, control_joints=("pelvis", "left_wrist"), control_samples=2,
                  densities=(0.05, 1.0), mesh_samples=0, seed=3)
    values.update(kwargs)
    return EvaluationProtocol(**values)


def test_ci_halfwidth():
    assert ci_halfwidth([2.0, 2.0, 2.0]) == 0.0
    assert ci_halfwidth([5.0]) == 0.0
    assert ci_halfwidth([0.0, 2.0]) == pytest.approx(1.96 * 1.0 / np.sqrt(2))


def test_repetition_seeds_are_stable():
    assert repetition_seeds(0, 4) == repetition_seeds(0, 4)
    assert len(set(repetition_seeds(0, 20))) == 20


def test_protocol_validation():
    with pytest.raises(ValueError):
        EvaluationProtocol(n_samples=16, pool_size=32)
    with pytest.raises(ValueError):
        EvaluationProtocol(mm_repeats=4, mm_pairs=3)
    with pytest.raises(ValueError):
        EvaluationProtocol(densities=(0.5,))
    with pytest.raises(KeyError):
        EvaluationProtocol(control_joints=("tail",))
    legacy = EvaluationProtocol.from_config({"control_joint": "head", "repetitions": 3})
    assert legacy.control_joints == ("head",) and legacy.repetitions == 3


def _report(**kwargs) -> MetricReport:
    values = dict(fid=0.5, r_precision=(0.4, 0.6, 0.7), matching=3.0, diversity=9.0, multimodality=2.0,
                  clip_score=0.6, foot_skating=0.05, aits=0.1)
    values.update(kwargs)
    return MetricReport(**values)


def test_report_validation():
    with pytest.raises(ValueError):
        _report(r_precision=(0.6, 0.4, 0.7))
    with pytest.raises(ValueError):
        _report(foot_skating=1.5)
    with pytest.raises(ValueError):
        _report(clip_score=1.2)
    with pytest.raises(ValueError):
        _report(fid=-0.1)
    with pytest.raises(ValueError):
        _report(traj_err=2.0)


def test_report_json_and_rows():
    report = _report(traj_err=0.1, loc_err=0.05, avg_err=0.2, ci={"fid": 0.01})
    back = MetricReport.from_dict(json.loads(report.to_json()))
    assert back == report, "report changed through JSON"
    labels = [row[0] for row in report.summary_rows()]
    assert labels[:4] == ["FID", "Top-1", "Top-2", "Top-3"] and labels[-1] == "AITS (s)"
    assert "Traj. err" in labels and "LSD" not in labels, f"labels {labels}"


def test_replayed_test_set_scores_like_ground_truth(replay):
    motions, captions, generator, evaluator = replay
    report, table = evaluate_suite(generator, motions, captions, evaluator, _protocol())
    assert len(table) == 2 and report.repetitions == 2, f"{len(table)} repetitions"
    assert report.fid < 1e-3, f"replaying the test set gave FID {report.fid}"
    assert report.multimodality == 0.0, "identical replays must have zero multimodality"
    assert report.traj_err == 0.0 and report.avg_err == pytest.approx(0.0, abs=1e-6)
    assert set(report.per_density) == {"0.05", "1"}, f"density keys {set(report.per_density)}"
    assert set(report.per_joint) == {"pelvis", "left_wrist"}, f"joint keys {set(report.per_joint)}"
    assert report.lsd is None, "no mesh model, so no LSD"
    assert all(v >= 0.0 for v in report.ci.values()), f"negative CI in {report.ci}"


def test_suite_is_reproducible(replay):
    motions, captions, generator, evaluator = replay
    protocol = _protocol(repetitions=1)
    first, _ = evaluate_suite(generator, motions, captions, evaluator, protocol)
    second, _ = evaluate_suite(generator, motions, captions, evaluator, protocol)
    assert first.r_precision == second.r_precision and first.diversity == second.diversity


def test_suite_rejects_misaligned_inputs(replay):
    motions, captions, generator, evaluator = replay
    with pytest.raises(ValueError):
        evaluate_suite(generator, motions, captions[:-1], evaluator, _protocol())
