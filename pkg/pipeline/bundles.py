from dataclasses import dataclass
from typing import Optional

import numpy as np

from loaders.registry import LoaderRegistry
from pipeline.acmdm.codec import IdentityCodec, LatentCodec
from pipeline.acmdm.model import ACMDM
from pipeline.acmdm.train import acmdm_from_checkpoint
from pipeline.control.model import ControlNetState
from pipeline.control.train import controlnet_from_checkpoint
from pipeline.mesh.model import MeshAutoEncoder
from pipeline.mesh.topology import MeshTopology
from pipeline.mesh.train import mesh_ae_from_checkpoint
from pipeline.motion_ae.train import ae_from_checkpoint
from pipeline.motion_data.motion import NormalizationStats
from services.checkpoint import Checkpoint
from services.text_encoder import TextEncoderInterface, make_text_encoder


@dataclass
class MeshBundle:
    model: ACMDM
    mesh_ae: MeshAutoEncoder
    topology: MeshTopology
    stats: NormalizationStats
    text_encoder: TextEncoderInterface

    @property
    def tpose(self) -> np.ndarray:
        return self.topology.vertices

    @classmethod
    def from_checkpoints(cls, acmdm_ckpt: Checkpoint, mesh_ae_ckpt: Checkpoint) -> "MeshBundle":
        if acmdm_ckpt.config.get("codec") != "mesh_ae":
            raise ValueError(f"mesh denoiser was trained on codec {acmdm_ckpt.config.get('codec')!r}, expected 'mesh_ae'")
        mesh_ae, topology = mesh_ae_from_checkpoint(mesh_ae_ckpt)
        return cls(
            model=acmdm_from_checkpoint(acmdm_ckpt),
            mesh_ae=mesh_ae,
            topology=topology,
            stats=NormalizationStats.from_dict(acmdm_ckpt.stats),
            text_encoder=make_text_encoder(acmdm_ckpt.config.get("text_encoder", "hashbag")),
        )


@dataclass
class ModelBundle:
    """Everything generation needs, rebuilt from checkpoints with EMA weights."""
    model: ACMDM
    codec: LatentCodec
    stats: NormalizationStats
    text_encoder: TextEncoderInterface
    control: Optional[ControlNetState] = None
    mesh: Optional[MeshBundle] = None

    @classmethod
    def from_checkpoints(
        cls,
        acmdm_ckpt: Checkpoint,
        ae_ckpt: Optional[Checkpoint] = None,
        controlnet_ckpt: Optional[Checkpoint] = None,
        mesh: Optional[MeshBundle] = None,
    ) -> "ModelBundle":
        codec_name = acmdm_ckpt.config.get("codec", "raw")
        if codec_name == "raw":
            codec: LatentCodec = IdentityCodec()
        elif ae_ckpt is None:
            raise ValueError(f"denoiser was trained on {codec_name} latents but no AE checkpoint was given")
        else:
            codec = ae_from_checkpoint(ae_ckpt)
        model = acmdm_from_checkpoint(acmdm_ckpt)
        control = controlnet_from_checkpoint(controlnet_ckpt, model) if controlnet_ckpt is not None else None
        return cls(
            model=model,
            codec=codec,
            stats=NormalizationStats.from_dict(acmdm_ckpt.stats),
            text_encoder=make_text_encoder(acmdm_ckpt.config.get("text_encoder", "hashbag")),
            control=control,
            mesh=mesh,
        )

    @classmethod
    def from_registry(cls, registry: LoaderRegistry) -> "ModelBundle":
        acmdm_ckpt = registry.acmdm()
        mesh = None
        if registry.has("mesh_acmdm") and registry.has("mesh_ae"):
            mesh = MeshBundle.from_checkpoints(registry.mesh_acmdm(), registry.mesh_ae())
        return cls.from_checkpoints(
            acmdm_ckpt,
            ae_ckpt=registry.ae() if acmdm_ckpt.config.get("codec", "raw") != "raw" else None,
            controlnet_ckpt=registry.controlnet() if registry.has("controlnet") else None,
            mesh=mesh,
        )
