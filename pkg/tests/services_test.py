import numpy as np
import pytest
import torch
import torch.nn as nn

from services.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from services.text_encoder import HashBagTextEncoder, encode_batch, make_text_encoder
from services.trainer import (
    TrainConfig,
    TrainingDivergedError,
    check_finite,
    collate_windows,
    ema_update,
    fixed_windows,
    lr_at,
)


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 0.0
    assert lr_at(1000, cfg) == pytest.approx(1e-4), "halfway through warmup"
    assert lr_at(2000, cfg) == pytest.approx(2e-4)
    assert lr_at(49_999, cfg) == pytest.approx(2e-4)
    assert lr_at(50_000, cfg) == pytest.approx(2e-5)
    with pytest.raises(ValueError):
        lr_at(-1, cfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(warmup_steps=100, decay_step=100)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(ema_decay=1.5)
    cfg = TrainConfig.from_config({"lr": 1e-3, "unknown": 1}, epochs=3, seed=None)
    assert cfg.lr == 1e-3 and cfg.epochs == 3 and cfg.seed == 0
    assert TrainConfig(batch_size=4).epoch_steps(9) == 3


def test_ema_update_limits():
    ema, live = nn.Linear(3, 2), nn.Linear(3, 2)
    before = [p.clone() for p in ema.parameters()]
    ema_update(ema, live, decay=1.0)
    assert all(torch.equal(a, b) for a, b in zip(ema.parameters(), before)), "decay 1 must keep the EMA"
    ema_update(ema, live, decay=0.0)
    assert all(torch.equal(a, b) for a, b in zip(ema.parameters(), live.parameters())), "decay 0 copies"
    with pytest.raises(ValueError):
        ema_update(ema, nn.Linear(3, 4), decay=0.5)


def test_collate_windows_pads_and_crops():
    seqs = [np.ones((5, 2), dtype=np.float32), np.ones((12, 2), dtype=np.float32)]
    x, mask, starts = collate_windows(seqs, [0, 1], max_frames=8, rng=np.random.default_rng(0),
                                      multiple=4, return_starts=True)
    assert x.shape == (2, 8, 2), f"batch {tuple(x.shape)}"
    assert mask.sum(dim=1).tolist() == [5, 8]
    assert not x[0, 5:].any(), "padding must be zero"
    assert starts[0] == 0 and 0 <= starts[1] <= 4


def test_fixed_windows():
    seqs = [np.arange(10, dtype=np.float32)[:, None], np.arange(3, dtype=np.float32)[:, None]]
    out = fixed_windows(seqs, [0, 0], window=4, rng=np.random.default_rng(0))
    assert out.shape == (2, 4, 1)
    assert torch.all(out[:, 1:] - out[:, :-1] == 1.0), "windows must be contiguous"
    with pytest.raises(ValueError):
        fixed_windows(seqs, [1], window=4, rng=np.random.default_rng(0))


def test_check_finite():
    assert check_finite(torch.tensor(0.5), step=0) == 0.5
    with pytest.raises(TrainingDivergedError) as info:
        check_finite(torch.tensor(float("nan")), step=7, last_checkpoint="acmdm.pt")
    assert info.value.step == 7 and "acmdm.pt" in str(info.value)


def test_checkpoint_roundtrip(tmp_path):
    model = nn.Linear(2, 2)
    ckpt = Checkpoint(kind="ae", config={"latent_dim": 4}, state_dict=model.state_dict(), step=12,
                      extra={"note": "x"})
    path = save_checkpoint(ckpt, tmp_path / "nested" / "ae.pt")
    back = load_checkpoint(path, kind="ae")
    assert back.step == 12 and back.config == {"latent_dim": 4} and back.extra == {"note": "x"}
    assert all(torch.equal(back.state_dict[k], v) for k, v in model.state_dict().items())


def test_checkpoint_errors(tmp_path):
    with pytest.raises(ValueError):
        Checkpoint(kind="vae", config={}, state_dict={})
    path = save_checkpoint(Checkpoint(kind="ae", config={}, state_dict={}), tmp_path / "ae.pt")
    with pytest.raises(ValueError, match="expected acmdm"):
        load_checkpoint(path, kind="acmdm")
    raw = torch.load(path, weights_only=False)
    raw["version"] = 99
    torch.save(raw, tmp_path / "old.pt")
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(tmp_path / "old.pt")
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.pt")


def test_hashbag_encoder(text_encoder):
    a = text_encoder.encode("A person walks forward.")
    assert a.shape == (512,) and np.linalg.norm(a) == pytest.approx(1.0, abs=1e-5)
    assert np.array_equal(a, HashBagTextEncoder().encode("a person walks forward")), "case or punctuation leaked"
    assert not np.allclose(a, text_encoder.encode("a person jumps"))
    assert encode_batch(text_encoder, ["a", "b c"]).shape == (2, 512)
    with pytest.raises(ValueError):
        text_encoder.encode("   ")


@pytest.mark.parametrize("left, right", [
    ("a person walks forward", "someone jumps twice"),
    ("the man waves his hand", "crouch down slowly"),
    ("turn left quickly", "a woman raises both arms"),
])
def test_hashbag_disjoint_prompts_are_near_orthogonal(text_encoder, left, right):
    a, b = text_encoder.encode(left), text_encoder.encode(right)
    assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-5)
    assert abs(float(a @ b)) < 0.2, f"cosine {float(a @ b):.3f} for {left!r} vs {right!r}"


def test_make_text_encoder_from_name(text_encoder):
    rebuilt = make_text_encoder(text_encoder.name)
    assert rebuilt.name == "hashbag-4096x512-s0"
    assert np.array_equal(rebuilt.encode("a person waves"), text_encoder.encode("a person waves"))
    assert make_text_encoder("hashbag", seed=3).name == "hashbag-4096x512-s3"
    with pytest.raises(KeyError):
        make_text_encoder("bert")
