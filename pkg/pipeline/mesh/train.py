import copy
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from misc.utility_functions import set_seed, timeit
from pipeline.mesh.config import MeshAEConfig, MeshAETrainConfig
from pipeline.mesh.model import MeshAutoEncoder
from pipeline.mesh.topology import MeshSequence, MeshTopology
from pipeline.motion_ae.loss import ae_loss
from pipeline.motion_ae.train import window_pool
from pipeline.motion_data.motion import NormalizationStats
from pipeline.motion_data.normalization import EPS_STD, normalize_array
from services.checkpoint import Checkpoint
from services.trainer import check_finite, fixed_windows, lr_at, make_optimizer, set_lr


def mesh_stats(meshes: Sequence[MeshSequence]) -> NormalizationStats:
    """Channel-shared XYZ statistics over every frame and vertex, as for joints."""
    if len(meshes) == 0:
        raise ValueError("empty dataset")
    flat = np.concatenate([m.coords.reshape(-1, 3).astype(np.float64) for m in meshes], axis=0)
    return NormalizationStats(mean=flat.mean(axis=0), std=np.maximum(flat.std(axis=0), EPS_STD))


def normalize_meshes(meshes: Sequence[MeshSequence], stats: NormalizationStats) -> List[MeshSequence]:
    return [MeshSequence(normalize_array(m.coords, stats), m.topology, fps=m.fps) for m in meshes]


@torch.no_grad()
def mesh_latent_statistics(model: MeshAutoEncoder, meshes: Sequence[MeshSequence]) -> Tuple[torch.Tensor, torch.Tensor]:
    model.eval()
    flat = torch.cat([
        model.encode(torch.from_numpy(m.coords.astype(np.float32)).unsqueeze(0)).reshape(-1, model.channels)
        for m in meshes
    ])
    return flat.mean(dim=0), flat.std(dim=0, unbiased=False)


@timeit
def train_mesh_ae(
    meshes: List[MeshSequence],
    topology: MeshTopology,
    cfg: Optional[MeshAEConfig] = None,
    hyper: Optional[MeshAETrainConfig] = None,
    progress: bool = True,
) -> Tuple[MeshAutoEncoder, pd.DataFrame]:
    """Smooth-L1 reconstruction on normalized vertex windows; latent stats are stored on return."""
    cfg = cfg or MeshAEConfig()
    hyper = hyper or MeshAETrainConfig()
    if not meshes:
        raise ValueError("empty dataset")
    set_seed(hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    sequences = [m.coords.astype(np.float32) for m in meshes]
    pool = window_pool([len(s) for s in sequences], hyper.window, 1)

    model = MeshAutoEncoder(topology, cfg)
    optimizer = make_optimizer(model.parameters(), hyper)
    steps_per_epoch = hyper.epoch_steps(len(pool))

    rows = []
    step = 0
    model.train()
    for epoch in tqdm(range(hyper.epochs), desc="train-mesh-ae", disable=not progress):
        for _ in range(steps_per_epoch):
            x = fixed_windows(sequences, rng.choice(pool, hyper.batch_size), hyper.window, rng)
            lr = lr_at(step, hyper)
            set_lr(optimizer, lr)
            loss = ae_loss(x, model(x))
            value = check_finite(loss, step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            rows.append({"step": step, "epoch": epoch, "loss": value, "lr": lr})
            step += 1

    mean, std = mesh_latent_statistics(model, meshes)
    model.set_latent_stats(mean, std)
    model.eval()
    print(f"✅ Mesh AE trained for {step} steps, final loss {rows[-1]['loss']:.5f}")
    return model, pd.DataFrame(rows)


def mesh_ae_checkpoint(model: MeshAutoEncoder, topology: MeshTopology, stats: NormalizationStats,
                       step: int = 0) -> Checkpoint:
    return Checkpoint(
        kind="mesh_ae",
        config={"model": model.cfg.to_dict()},
        state_dict=copy.deepcopy(model.state_dict()),
        stats=stats.to_dict(),
        step=step,
        extra={"topology": {"vertices": topology.vertices, "faces": topology.faces,
                            "clusters": topology.clusters}},
    )


def mesh_ae_from_checkpoint(ckpt: Checkpoint) -> Tuple[MeshAutoEncoder, MeshTopology]:
    topo = ckpt.extra["topology"]
    topology = MeshTopology(np.asarray(topo["vertices"]), np.asarray(topo["faces"]),
                            np.asarray(topo["clusters"]))
    model = MeshAutoEncoder(topology, MeshAEConfig(**ckpt.config["model"]))
    model.load_state_dict(ckpt.state_dict)
    return model.eval(), topology
