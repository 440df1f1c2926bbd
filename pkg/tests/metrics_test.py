import numpy as np
import pytest

from evaluation.metrics import (
    aggregate_control_errors,
    control_errors,
    cosine_score,
    diversity,
    draw_disjoint_pairs,
    fid,
    foot_skating_ratio,
    multimodality,
    r_precision_and_matching,
)
from pipeline.control.spec import Constraint, ControlSpec
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.skeleton import LEFT_FOOT, PELVIS, RIGHT_FOOT


def _feats(n=200, d=8, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))


def test_fid_of_identical_sets_is_zero():
    x = _feats()
    assert fid(x, x) < 1e-6, f"fid(X, X) = {fid(x, x)}"


def test_fid_is_symmetric_and_sees_mean_shift():
    a, b = _feats(seed=1), _feats(seed=2) * 1.5
    assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-6)
    shift = np.full(8, 0.5)
    assert fid(a, a + shift) == pytest.approx(shift @ shift, rel=1e-6), "pure shift should cost |mu|^2"


def test_fid_matches_closed_form_for_shifted_gaussians():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((100_000, 4))
    b = rng.standard_normal((100_000, 4)) + np.array([2.0, 0.0, 0.0, 0.0])
    assert fid(a, b) == pytest.approx(4.0, rel=0.05), f"fid {fid(a, b):.4f}, closed form 4"


def test_fid_needs_two_samples():
    with pytest.raises(ValueError):
        fid(_feats(1), _feats())


def test_r_precision_perfect_retrieval():
    feats = np.eye(64)
    top1, top2, top3, matching = r_precision_and_matching(feats, feats, pool_size=32,
                                                          rng=np.random.default_rng(0))
    assert (top1, top2, top3) == (1.0, 1.0, 1.0), f"R-precision {(top1, top2, top3)}"
    assert matching == 0.0


def test_r_precision_is_monotone_and_drops_leftovers():
    m, t = _feats(70, seed=3), _feats(70, seed=4)
    top1, top2, top3, matching = r_precision_and_matching(m, t, pool_size=32, rng=np.random.default_rng(0))
    assert 0.0 <= top1 <= top2 <= top3 <= 1.0, f"R-precision {(top1, top2, top3)}"
    assert matching > 0.0
    with pytest.raises(ValueError):
        r_precision_and_matching(m[:10], t[:10], pool_size=32)


def test_random_r_precision_is_chance():
    m, t = _feats(32 * 500, d=64, seed=5), _feats(32 * 500, d=64, seed=6)
    top1, _, _, _ = r_precision_and_matching(m, t, pool_size=32, rng=np.random.default_rng(0))
    assert top1 == pytest.approx(1 / 32, abs=0.008), f"top-1 {top1:.4f} for random features"


def test_cosine_score_bounds():
    x = _feats(10)
    assert cosine_score(x, x) == pytest.approx(1.0)
    assert cosine_score(x, -x) == pytest.approx(-1.0)


def test_diversity_of_constant_set_is_zero():
    assert diversity(np.ones((20, 4)), n_pairs=10) == 0.0
    assert multimodality([np.ones((10, 4)), np.zeros((10, 4))], n_pairs=5) == 0.0


def test_diversity_of_two_points():
    feats = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert diversity(feats, n_pairs=1) == pytest.approx(5.0)


def test_disjoint_pairs():
    pairs = draw_disjoint_pairs(10, 5, np.random.default_rng(0))
    assert sorted(pairs.ravel().tolist()) == list(range(10)), "an index was used twice"
    with pytest.raises(ValueError):
        draw_disjoint_pairs(10, 6, np.random.default_rng(0))


def test_control_error_oracle():
    coords = np.zeros((4, 22, 3), dtype=np.float32)
    spec = ControlSpec([
        Constraint(0, PELVIS, (0.6, 0.0, 0.0)),
        Constraint(2, PELVIS, (0.0, 0.1, 0.0)),
    ])
    traj, loc, avg = control_errors(MotionSequence(coords), spec)
    assert traj == 1.0 and loc == pytest.approx(0.5) and avg == pytest.approx(0.35), (
        f"control errors {(traj, loc, avg)}"
    )


def test_control_errors_across_sequences():
    traj, loc, avg = aggregate_control_errors([np.array([0.1, 0.2]), np.array([0.9])])
    assert traj == 0.5 and loc == pytest.approx(1 / 3) and avg == pytest.approx(0.4)
    with pytest.raises(ValueError):
        aggregate_control_errors([])


def _feet_motion(step: float, height: float, frames: int = 5) -> MotionSequence:
    coords = np.zeros((frames, 22, 3), dtype=np.float32)
    for f in range(frames):
        coords[f, [LEFT_FOOT, RIGHT_FOOT], 0] = f * step
        coords[f, [LEFT_FOOT, RIGHT_FOOT], 1] = height
    return MotionSequence(coords)


def test_foot_skating_cases():
    assert foot_skating_ratio(_feet_motion(0.0, 0.0)) == 0.0, "standing still is not skating"
    assert foot_skating_ratio(_feet_motion(0.03, 0.0)) == 1.0, "grounded sliding should count"
    assert foot_skating_ratio(_feet_motion(0.03, 0.3)) == 0.0, "airborne feet cannot skate"
    assert foot_skating_ratio(_feet_motion(0.01, 0.0)) == 0.0, "slow drift is under the threshold"
    assert foot_skating_ratio(_feet_motion(0.03, 0.0, frames=1)) == 0.0
