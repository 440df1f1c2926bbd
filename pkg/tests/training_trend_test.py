"""Desk-scale training runs; `pytest -m slow`."""
import numpy as np
import pytest
import torch

from evaluation.metrics import aggregate_control_errors, constraint_errors, fid, r_precision_and_matching
from evaluation.models.evaluator import EvaluatorConfig, EvaluatorTrainConfig, train_evaluator
from pipeline.acmdm.codec import IdentityCodec
from pipeline.acmdm.config import build_model
from pipeline.acmdm.train import build_corpus, train_acmdm
from pipeline.bundles import ModelBundle
from pipeline.build import ACMDMPipeline, SamplingSettings
from pipeline.control.model import ControlNetState
from pipeline.control.spec import DENSITY_LEVELS, sample_control_spec
from pipeline.control.train import train_controlnet
from pipeline.diffusion.schedule import DiffusionObjective
from pipeline.motion_ae.config import AEConfig, AETrainConfig
from pipeline.motion_ae.train import reconstruction_mse, train_ae
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.normalization import compute_stats, normalize
from pipeline.motion_data.skeleton import PELVIS
from pipeline.motion_data.synthetic import synth_dataset
from services.text_encoder import HashBagTextEncoder
from services.trainer import TrainConfig

pytestmark = pytest.mark.slow

N_TRAIN = 96
N_EVAL = 64
CHANCE_TOP1 = 1 / 32


def _head_tail(history, n=20):
    loss = history["loss"].to_numpy()
    return loss[:n].mean(), loss[-n:].mean()


def _denoiser_cfg(seed=0, epochs=8) -> TrainConfig:
    return TrainConfig(batch_size=16, max_frames=64, lr=1e-3, warmup_steps=10, decay_step=1000,
                       epochs=epochs, steps_per_epoch=50, checkpoint_every=10_000, seed=seed)


@pytest.fixture(scope="module")
def corpus_data():
    motions, manifest = synth_dataset(N_TRAIN + N_EVAL, seed=11)
    captions = [e.captions for e in manifest.entries]
    stats = compute_stats(motions[:N_TRAIN])
    return {
        "motions": motions,
        "normalized": [normalize(m, stats) for m in motions],
        "captions": captions,
        "stats": stats,
        "encoder": HashBagTextEncoder(),
    }


@pytest.fixture(scope="module")
def train_corpus(corpus_data):
    d = corpus_data
    return build_corpus(d["normalized"][:N_TRAIN], d["captions"][:N_TRAIN], d["encoder"], d["stats"])


@pytest.fixture(scope="module")
def trained_ae(corpus_data):
    hyper = AETrainConfig(batch_size=16, window=64, lr=1e-3, warmup_steps=10, decay_step=2000,
                          epochs=10, steps_per_epoch=50)
    return train_ae(corpus_data["normalized"][:N_TRAIN], AEConfig(hidden_dim=64), hyper, progress=False)


@pytest.fixture(scope="module")
def evaluator(corpus_data):
    d = corpus_data
    hyper = EvaluatorTrainConfig(batch_size=32, max_frames=196, epochs=20, steps_per_epoch=50, warmup_steps=20)
    model, _ = train_evaluator(d["normalized"][:N_TRAIN], d["captions"][:N_TRAIN], d["encoder"],
                               EvaluatorConfig(embed_dim=64, hidden_dim=64), hyper, progress=False)
    return model


@pytest.fixture(scope="module")
def eval_set(corpus_data, evaluator):
    """Held-out motions, one caption each, and their evaluator features."""
    d = corpus_data
    rng = np.random.default_rng(0)
    motions = d["motions"][N_TRAIN:]
    prompts = [caps[rng.integers(len(caps))] for caps in d["captions"][N_TRAIN:]]
    real = evaluator.embed_motions(d["normalized"][N_TRAIN:])
    return motions, prompts, real


def _pipeline(model, corpus_data, control=None) -> ACMDMPipeline:
    bundle = ModelBundle(model=model, codec=IdentityCodec(), stats=corpus_data["stats"],
                         text_encoder=corpus_data["encoder"], control=control)
    return ACMDMPipeline(bundle, SamplingSettings(steps=20))


def _train_denoiser(train_corpus, objective=DiffusionObjective.V, seed=0):
    cfg = build_model("tiny", patch=22, objective=objective)
    return train_acmdm(train_corpus, cfg, _denoiser_cfg(seed), progress=False)


def _desk_scores(model, corpus_data, evaluator, eval_set, seed=0):
    motions, prompts, real = eval_set
    generated = _pipeline(model, corpus_data).generate_batch(prompts, [m.frames for m in motions], seed=seed)
    feats = evaluator.embed_motions([normalize(m, corpus_data["stats"]) for m in generated])
    top1, _, _, _ = r_precision_and_matching(feats, evaluator.embed_texts(prompts), pool_size=32,
                                             rng=np.random.default_rng(seed))
    return fid(real, feats), top1


@pytest.fixture(scope="module")
def v_denoiser(train_corpus):
    return _train_denoiser(train_corpus)


def test_motion_ae_loss_decreases(trained_ae):
    _, history = trained_ae
    head, tail = _head_tail(history)
    assert tail < 0.5 * head, f"AE loss went from {head:.4f} to {tail:.4f}"
    per_epoch = history.groupby("epoch")["loss"].mean().to_numpy()
    assert per_epoch[4] <= 0.7 * per_epoch[0], f"epoch losses {per_epoch[:5]}"


def test_motion_ae_reconstruction(trained_ae, corpus_data):
    model, _ = trained_ae
    mse = reconstruction_mse(model, corpus_data["normalized"][N_TRAIN:])
    assert mse < 0.05, f"held-out reconstruction MSE {mse:.4f}"


def test_denoiser_loss_decreases(v_denoiser):
    head, tail = _head_tail(v_denoiser.history, n=40)
    assert np.isfinite(v_denoiser.history["loss"]).all()
    assert tail < head, f"denoiser loss went from {head:.4f} to {tail:.4f}"


def test_generated_motions_beat_noise(v_denoiser, corpus_data, evaluator, eval_set):
    motions, _, real = eval_set
    gen = torch.Generator().manual_seed(0)
    noise = [MotionSequence(torch.randn(m.frames, 22, 3, generator=gen).numpy()) for m in motions]
    noise_fid = fid(real, evaluator.embed_motions(noise))
    gen_fid, top1 = _desk_scores(v_denoiser.ema, corpus_data, evaluator, eval_set)
    assert gen_fid <= 0.5 * noise_fid, f"generated FID {gen_fid:.3f}, noise FID {noise_fid:.3f}"
    assert top1 >= 3 * CHANCE_TOP1, f"top-1 {top1:.3f} below three times chance"


def test_objective_ablation_ordering(train_corpus, corpus_data, evaluator, eval_set):
    scores = {}
    for objective in (DiffusionObjective.V, DiffusionObjective.EPS, DiffusionObjective.X0):
        runs = [_train_denoiser(train_corpus, objective, seed) for seed in range(3)]
        scores[objective.value] = float(np.mean([
            _desk_scores(r.ema, corpus_data, evaluator, eval_set, seed)[0] for seed, r in enumerate(runs)
        ]))
    assert scores["v"] <= 1.2 * scores["eps"], f"FID by objective {scores}"
    assert scores["eps"] <= 1.2 * scores["x0"], f"FID by objective {scores}"


def test_controlnet_reduces_keyframe_error(v_denoiser, train_corpus, corpus_data):
    d = corpus_data
    result = train_controlnet(train_corpus, d["motions"][:N_TRAIN], v_denoiser.ema,
                              train_cfg=_denoiser_cfg(epochs=8), progress=False)
    controlled = _pipeline(v_denoiser.ema, d,
                           control=ControlNetState(result.ema_branch, result.state.frozen_main))
    plain = _pipeline(v_denoiser.ema, d)

    rng = np.random.default_rng(0)
    held_out = d["motions"][N_TRAIN:]
    with_control, without = [], []
    for density in DENSITY_LEVELS:
        errs_c, errs_b = [], []
        for k, i in enumerate(rng.choice(len(held_out), size=8, replace=False)):
            gt = held_out[i]
            spec = sample_control_spec(gt, density, (PELVIS,), rng)
            prompt = d["captions"][N_TRAIN + i][0]
            errs_c.append(constraint_errors(controlled.generate_controlled(prompt, spec, gt.frames, seed=k), spec))
            errs_b.append(constraint_errors(plain.generate(prompt, gt.frames, seed=k), spec))
        with_control.append(aggregate_control_errors(errs_c))
        without.append(aggregate_control_errors(errs_b))

    traj_c, _, avg_c = np.mean(with_control, axis=0)
    traj_b, _, avg_b = np.mean(without, axis=0)
    assert avg_c <= 0.5 * avg_b, f"avg error {avg_c:.3f} m with control vs {avg_b:.3f} m without"
    assert traj_c < traj_b, f"trajectory failure rate {traj_c:.3f} with control vs {traj_b:.3f} without"
