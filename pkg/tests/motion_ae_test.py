import numpy as np
import pytest
import torch

from pipeline.motion_ae.config import AEConfig, AETrainConfig
from pipeline.motion_ae.loss import ae_loss, kl_divergence
from pipeline.motion_ae.model import MotionAutoEncoder
from pipeline.motion_ae.train import ae_checkpoint, ae_from_checkpoint, reconstruction_mse, train_ae, window_pool
import pipeline.motion_ae.train as train_module
from pipeline.motion_data.normalization import normalize


def _small_ae(**kwargs) -> MotionAutoEncoder:
    torch.manual_seed(0)
    return MotionAutoEncoder(AEConfig(hidden_dim=16, layers_per_block=1, **kwargs)).eval()


def test_latent_shape_downsamples_time_only():
    ae = _small_ae()
    x = torch.randn(2, 196, 22, 3)
    z = ae.encode(x).latent
    assert z.shape == (2, 49, 22, 4), f"latent shape {tuple(z.shape)}"
    out = ae.decode(z, frames=196)
    assert out.shape == x.shape, f"decoded shape {tuple(out.shape)}"


def test_odd_length_is_truncated_back():
    ae = _small_ae()
    x = torch.randn(1, 37, 22, 3)
    recon, _ = ae(x)
    assert recon.shape == x.shape, f"{tuple(recon.shape)} != {tuple(x.shape)}"


def test_encoder_is_causal():
    ae = _small_ae()
    gen = torch.Generator().manual_seed(0)
    rng = np.random.default_rng(0)
    changed = 0
    for pair in range(20):
        frames = int(rng.integers(12, 65))
        t = int(rng.integers(0, (frames - 5) // 4 + 1))
        x = torch.randn(1, frames, 22, 3, generator=gen)
        y = x.clone()
        first = int(rng.integers(4 * t + 4, frames))
        y[:, first:] += torch.randn(y[:, first:].shape, generator=gen)
        with torch.no_grad():
            zx, zy = ae.encode(x).latent, ae.encode(y).latent
        assert torch.equal(zx[:, :t + 1], zy[:, :t + 1]), (
            f"pair {pair}: perturbing frames >= {first} of {frames} changed latents up to {t}"
        )
        changed += not torch.equal(zx, zy)
    assert changed, "no perturbation reached any latent"


def test_too_short_motion_rejected():
    with pytest.raises(ValueError):
        _small_ae().encode(torch.randn(1, 3, 22, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        AEConfig(temporal_downsample=3)
    with pytest.raises(ValueError):
        AEConfig(n_blocks=1, temporal_downsample=4)


def test_smooth_l1_value():
    m = torch.zeros(2, 8, 22, 3)
    loss = ae_loss(m, m + 0.5)
    assert abs(float(loss) - 0.125) < 1e-7, f"smooth L1 of 0.5 offsets is {float(loss)}"


def test_kl_is_non_negative_and_zero_at_prior():
    mean, logvar = torch.randn(4, 6), torch.randn(4, 6)
    assert float(kl_divergence(mean, logvar)) >= 0.0
    assert float(kl_divergence(torch.zeros(3), torch.zeros(3))) == 0.0


def test_variational_mean_encoding_is_deterministic():
    ae = _small_ae(variational=True)
    x = torch.randn(1, 16, 22, 3)
    a = ae.encode(x, noise_scale=0.0)
    b = ae.encode(x, noise_scale=0.0)
    assert torch.equal(a.latent, b.latent) and torch.equal(a.latent, a.mean), "posterior mean is not stable"


def test_codec_roundtrip_through_latent_stats():
    ae = _small_ae()
    ae.set_latent_stats(torch.full((4,), 0.5), torch.full((4,), 2.0))
    z = torch.randn(1, 5, 22, 4)
    assert torch.allclose(ae.normalize_latent(ae.denormalize_latent(z)), z, atol=1e-6)


def test_window_pool_keeps_full_windows(capsys):
    pool = window_pool([40, 64, 196, 50, 120], 64, 4)
    assert pool.tolist() == [1, 2, 4], f"pool {pool.tolist()}"
    assert "2 of 5 sequences" in capsys.readouterr().out, "skipped sequences must be reported"
    assert window_pool([64, 80], 64, 4).tolist() == [0, 1]
    with pytest.raises(ValueError, match="no sequence covers"):
        window_pool([40, 50], 64, 4)
    with pytest.raises(ValueError):
        window_pool([100], 62, 4)


def test_train_ae_uses_the_requested_window(small_corpus, corpus_stats, monkeypatch):
    motions, _ = small_corpus
    normalized = [normalize(m, corpus_stats) for m in motions]
    seen = []
    original = train_module.fixed_windows

    def recording(sequences, indices, window, rng):
        seen.append((window, [len(sequences[i]) for i in indices]))
        return original(sequences, indices, window, rng)

    monkeypatch.setattr(train_module, "fixed_windows", recording)
    hyper = AETrainConfig(batch_size=4, window=64, epochs=1, steps_per_epoch=2, warmup_steps=1, decay_step=10)
    train_ae(normalized, AEConfig(hidden_dim=8, layers_per_block=1), hyper, progress=False)
    assert all(window == 64 for window, _ in seen), f"windows {[w for w, _ in seen]}"
    assert all(n >= 64 for _, lengths in seen for n in lengths), "a short sequence reached a 64-frame batch"


def test_train_ae_smoke(small_corpus, corpus_stats, tmp_path):
    motions, _ = small_corpus
    normalized = [normalize(m, corpus_stats) for m in motions]
    cfg = AEConfig(hidden_dim=8, layers_per_block=1)
    hyper = AETrainConfig(batch_size=4, window=16, epochs=1, steps_per_epoch=3,
                          warmup_steps=1, decay_step=10)
    model, history = train_ae(normalized, cfg, hyper, progress=False)
    assert len(history) == 3 and np.isfinite(history["loss"]).all(), f"history {history}"
    assert (model.latent_std > 0).all(), "latent std must be positive"

    back = ae_from_checkpoint(ae_checkpoint(model, corpus_stats))
    assert reconstruction_mse(back, normalized[:2]) == pytest.approx(reconstruction_mse(model, normalized[:2]))
