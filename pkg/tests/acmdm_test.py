import numpy as np
import pytest
import torch

from pipeline.acmdm.codec import IdentityCodec, latent_frame_mask
from pipeline.acmdm.config import SIZES, ACMDMConfig, build_model
from pipeline.acmdm.generate import generate_normalized
from pipeline.acmdm.layers import Attention
from pipeline.acmdm.model import ACMDM, acmdm_forward, parameter_count
from pipeline.acmdm.train import acmdm_from_checkpoint, build_corpus, train_acmdm
from pipeline.diffusion.schedule import DiffusionObjective, NoiseSchedule, SamplerConfig
from pipeline.motion_data.normalization import normalize
from services.trainer import TrainConfig


def _small_train_cfg(**kwargs) -> TrainConfig:
    values = dict(batch_size=2, max_frames=40, warmup_steps=1, decay_step=100, epochs=1,
                  steps_per_epoch=2, checkpoint_every=10_000)
    values.update(kwargs)
    return TrainConfig(**values)


@pytest.fixture
def corpus(small_corpus, corpus_stats, text_encoder):
    motions, manifest = small_corpus
    normalized = [normalize(m, corpus_stats) for m in motions]
    return build_corpus(normalized, [e.captions for e in manifest.entries], text_encoder, corpus_stats)


def test_size_ladder():
    assert [SIZES[s][0] for s in ("S", "B", "L", "XL")] == [8, 12, 16, 20]
    cfg = build_model("XL", patch=1)
    assert (cfg.depth, cfg.heads, cfg.width) == (20, 20, 1280)
    with pytest.raises(KeyError):
        build_model("XXL", patch=1)


def test_config_validation():
    with pytest.raises(ValueError):
        ACMDMConfig(size="x", depth=2, heads=4, width=64, patch_spatial=1)
    with pytest.raises(ValueError):
        build_model("tiny", patch=4)
    with pytest.raises(ValueError):
        build_model("tiny", patch=2, conditioning="cross")
    assert ACMDMConfig.from_dict(build_model("tiny", 2).to_dict()) == build_model("tiny", 2)


def test_parameter_count_grows_with_size():
    counts = {}
    for size in ("S", "B", "L", "XL"):
        with torch.device("meta"):
            counts[size] = parameter_count(ACMDM(build_model(size, patch=22)))
    assert counts["S"] < counts["B"] < counts["L"] < counts["XL"], f"parameter counts {counts}"


@pytest.mark.parametrize("objective, expected", [
    (DiffusionObjective.V, "flow"), (DiffusionObjective.EPS, "ddpm"), (DiffusionObjective.X0, "ddpm"),
])
def test_objective_picks_a_sampleable_schedule(objective, expected):
    model = ACMDM(build_model("tiny", 2, objective=objective)).eval()
    assert model.cfg.schedule == expected, f"{objective.value} got {model.cfg.schedule}"
    out = generate_normalized(model, torch.randn(1, 512), 4, sampler=SamplerConfig.for_objective(
        NoiseSchedule(kind=expected), steps=2))
    assert torch.isfinite(out).all()


@pytest.mark.parametrize("objective, schedule", [
    (DiffusionObjective.EPS, "flow"), (DiffusionObjective.X0, "flow"), (DiffusionObjective.V, "ddpm"),
])
def test_unsampleable_pairs_rejected(objective, schedule):
    with pytest.raises(ValueError, match="cannot be sampled"):
        build_model("tiny", 2, objective=objective, schedule=schedule)


def test_patchify_token_count(tiny_model):
    grid = tiny_model.patchify(torch.randn(2, 10, 22, 3))
    assert grid.tokens.shape == (2, 10 * 11, 64), f"tokens {tuple(grid.tokens.shape)}"
    with pytest.raises(ValueError):
        tiny_model.patchify(torch.randn(2, 10, 21, 3))
    with pytest.raises(ValueError):
        tiny_model.patchify(torch.randn(2, 10, 22, 4))


def test_adaln_starts_as_patch_roundtrip(tiny_model):
    x = torch.randn(2, 6, 22, 3)
    t = torch.rand(2)
    with torch.no_grad():
        out = tiny_model(x, t, torch.randn(2, 512))
        expected = tiny_model.unpatchify(tiny_model.patchify(x))
    assert torch.allclose(out, expected, atol=1e-6), "zero-initialized gates should leave tokens untouched"


@pytest.mark.parametrize("conditioning", ["adaln", "concat"])
def test_forward_shape(conditioning):
    model = ACMDM(build_model("tiny", patch=11, conditioning=conditioning)).eval()
    x = torch.randn(3, 5, 22, 3)
    with torch.no_grad():
        out = model(x, torch.rand(3), None)
    assert out.shape == x.shape, f"{conditioning}: {tuple(out.shape)}"


def test_padding_does_not_leak_into_valid_frames():
    torch.manual_seed(0)
    model = ACMDM(build_model("tiny", patch=2, conditioning="concat")).eval()
    x = torch.randn(1, 8, 22, 3)
    y = x.clone()
    y[:, 5:] = torch.randn(1, 3, 22, 3)
    mask = torch.tensor([[True] * 5 + [False] * 3])
    t, text = torch.rand(1), torch.randn(1, 512)
    with torch.no_grad():
        a, b = model(x, t, text, frame_mask=mask), model(y, t, text, frame_mask=mask)
    assert torch.allclose(a[:, :5], b[:, :5], atol=1e-5), "padded frames changed valid outputs"


def test_rope_logits_depend_on_relative_position():
    torch.manual_seed(0)
    attn = Attention(64, 2, qk_norm=False)
    x = torch.randn(1, 6, 64)
    pos = torch.arange(6)
    with torch.no_grad():
        a = attn.attention_logits(x, pos)
        b = attn.attention_logits(x, pos + 7)
    assert torch.allclose(a, b, atol=1e-5), f"max logit change {(a - b).abs().max():.2e} after shifting positions"


def test_qk_norm_gives_unit_queries_and_keys():
    torch.manual_seed(0)
    attn = Attention(64, 2)
    with torch.no_grad():
        q, k = attn.project_qk(torch.randn(2, 5, 64) * 10, torch.arange(5))
    for name, v in (("q", q), ("k", k)):
        norms = v.norm(dim=-1)
        assert torch.allclose(norms, torch.ones_like(norms), atol=1e-5), f"{name} norms {norms.flatten()[:4]}"


def test_token_space_forward_matches_model(tiny_model):
    torch.manual_seed(0)
    x, t, text = torch.randn(2, 6, 22, 3), torch.rand(2), torch.randn(2, 512)
    mask = torch.tensor([[True] * 6, [True] * 4 + [False] * 2])
    with torch.no_grad():
        grid = acmdm_forward(tiny_model, tiny_model.patchify(x), t, text, frame_mask=mask)
        direct = tiny_model(x, t, text, frame_mask=mask)
    assert (grid.t_len, grid.s_len) == (6, 11), f"grid {grid.t_len} x {grid.s_len}"
    assert torch.equal(tiny_model.unpatchify(grid), direct), "token-space forward disagrees with the model"


def test_text_dropout(tiny_model):
    text = torch.randn(4, 512)
    assert torch.equal(tiny_model.drop_text(text, 0.0), text)
    dropped = tiny_model.drop_text(text, 1.0)
    assert torch.equal(dropped, tiny_model.null_text.expand_as(text)), "p=1 must replace every row"


def test_latent_frame_mask():
    mask = torch.tensor([[True] * 9 + [False] * 3])
    assert latent_frame_mask(mask, 4).tolist() == [[True, True, True]]


def test_generation_shape_and_seed(tiny_model):
    text = torch.randn(2, 512)
    sampler = SamplerConfig(steps=3)
    a = generate_normalized(tiny_model, text, 9, sampler=sampler, seed=4)
    b = generate_normalized(tiny_model, text, 9, sampler=sampler, seed=4)
    assert a.shape == (2, 9, 22, 3), f"shape {tuple(a.shape)}"
    assert torch.equal(a, b), "same seed gave different samples"
    with pytest.raises(ValueError):
        generate_normalized(tiny_model, text, 0, sampler=sampler)


def test_codec_channel_mismatch_rejected():
    model = ACMDM(build_model("tiny", patch=2, d_in=4)).eval()
    with pytest.raises(ValueError):
        generate_normalized(model, torch.randn(1, 512), 8, codec=IdentityCodec())


def test_corpus_keeps_captions(corpus, small_corpus):
    _, manifest = small_corpus
    assert len(corpus) == len(manifest), f"{len(corpus)} sequences for {len(manifest)} entries"
    assert corpus.codec_name == "raw" and corpus.temporal_factor == 1
    assert all(t.shape[1] == 512 for t in corpus.text)


def test_train_and_reload(corpus):
    result = train_acmdm(corpus, build_model("tiny", patch=2), _small_train_cfg(), progress=False)
    assert len(result.history) == 2 and np.isfinite(result.history["loss"]).all()
    reloaded = acmdm_from_checkpoint(result.checkpoint)
    for (name, a), b in zip(result.ema.state_dict().items(), reloaded.state_dict().values()):
        assert torch.equal(a, b), f"EMA tensor {name} changed on reload"


def test_resume_matches_uninterrupted_run(corpus):
    cfg = build_model("tiny", patch=2)
    full = train_acmdm(corpus, cfg, _small_train_cfg(epochs=2), progress=False)
    first = train_acmdm(corpus, cfg, _small_train_cfg(epochs=1), progress=False)
    resumed = train_acmdm(corpus, cfg, _small_train_cfg(epochs=2), resume=first.checkpoint, progress=False)
    expected = full.history["loss"].to_numpy()[2:]
    got = resumed.history["loss"].to_numpy()
    assert np.allclose(got, expected, rtol=1e-5), f"resumed losses {got} vs {expected}"
