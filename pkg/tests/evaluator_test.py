import numpy as np
import pytest
import torch

from evaluation.models.evaluator import (
    EvaluatorConfig,
    EvaluatorModel,
    EvaluatorTrainConfig,
    evaluator_checkpoint,
    evaluator_from_checkpoint,
    soft_info_nce,
    train_evaluator,
)
from pipeline.motion_data.normalization import normalize


def _hyper() -> EvaluatorTrainConfig:
    return EvaluatorTrainConfig(batch_size=4, max_frames=40, warmup_steps=1, decay_step=10,
                                epochs=1, steps_per_epoch=2)


def test_embeddings_are_unit_norm(small_corpus, corpus_stats, text_encoder):
    motions, manifest = small_corpus
    model = EvaluatorModel(EvaluatorConfig(embed_dim=16, hidden_dim=16), text_encoder)
    feats = model.embed_motions([normalize(m, corpus_stats) for m in motions[:3]])
    assert feats.shape == (3, 16), f"motion features {feats.shape}"
    assert np.allclose(np.linalg.norm(feats, axis=1), 1.0, atol=1e-5)
    texts = model.embed_texts([manifest.entries[0].captions[0], "a person jumps"])
    assert np.allclose(np.linalg.norm(texts, axis=1), 1.0, atol=1e-5)


def test_padding_does_not_reach_valid_frames():
    torch.manual_seed(0)
    tower = EvaluatorModel(EvaluatorConfig(embed_dim=16, hidden_dim=16)).motion_tower.eval()
    short = torch.randn(1, 9, 22, 3)
    padded = torch.cat([short, 5.0 * torch.randn(1, 7, 22, 3)], dim=1)
    mask = torch.tensor([[True] * 9 + [False] * 7])
    with torch.no_grad():
        alone, batched = tower(short), tower(padded, mask)
    assert torch.allclose(alone, batched, atol=1e-5), f"max drift {float((alone - batched).abs().max()):.2e}"


def test_embed_texts_needs_encoder():
    with pytest.raises(ValueError):
        EvaluatorModel(EvaluatorConfig(embed_dim=8, hidden_dim=8)).embed_texts(["a person walks"])


def test_soft_info_nce_shares_repeated_captions():
    emb = torch.nn.functional.normalize(torch.randn(4, 8), dim=-1)
    distinct = soft_info_nce(emb, emb, torch.tensor([0, 1, 2, 3]), temperature=0.07)
    repeated = soft_info_nce(emb, emb, torch.tensor([0, 0, 1, 1]), temperature=0.07)
    assert float(distinct) > 0.0
    assert torch.isfinite(repeated), "soft targets produced a non-finite loss"
    one = emb[:1].expand(4, 8)
    shared = soft_info_nce(one, one, torch.zeros(4, dtype=torch.long), temperature=0.07)
    assert float(shared) == pytest.approx(np.log(4), abs=1e-5), "uniform targets over equal logits"


def test_train_and_reload(small_corpus, corpus_stats, text_encoder):
    motions, manifest = small_corpus
    normalized = [normalize(m, corpus_stats) for m in motions]
    captions = [e.captions for e in manifest.entries]
    cfg = EvaluatorConfig(embed_dim=16, hidden_dim=16)
    model, history = train_evaluator(normalized, captions, text_encoder, cfg, _hyper(), progress=False)
    assert list(history["step"]) == [0, 1] and np.isfinite(history["loss"]).all()

    ckpt = evaluator_checkpoint(model, text_encoder.name)
    assert ckpt.kind == "evaluator" and ckpt.config["text_encoder"] == text_encoder.name
    restored = evaluator_from_checkpoint(ckpt, text_encoder)
    assert np.allclose(restored.embed_motions(normalized[:2]), model.embed_motions(normalized[:2]))


def test_train_rejects_bad_captions(small_corpus, corpus_stats, text_encoder):
    motions, _ = small_corpus
    normalized = [normalize(m, corpus_stats) for m in motions[:4]]
    with pytest.raises(ValueError, match="distinct captions"):
        train_evaluator(normalized, [["a person walks"]] * 4, text_encoder, hyper=_hyper(), progress=False)
    with pytest.raises(ValueError):
        train_evaluator(normalized, [["a"], ["b"]], text_encoder, hyper=_hyper(), progress=False)
