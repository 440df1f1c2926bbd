"""Writes generated motions and meshes in formats external viewers read."""

import json
from pathlib import Path
from typing import Literal, Union

from data_handler import save_obj
from misc.decorators import log_artifact_saving
from pipeline.mesh.topology import MeshSequence
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON, SkeletonDef

AnimFormat = Literal["jsonl", "obj"]


@log_artifact_saving
def write_jsonl(m: Union[MotionSequence, MeshSequence], path: Union[str, Path]) -> Path:
    """One JSON object per frame: {"frame", "time", "points"} with points in meters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for i, frame in enumerate(m.coords):
            f.write(json.dumps({"frame": i, "time": i / m.fps, "points": frame.round(6).tolist()}) + "\n")
    return path


@log_artifact_saving
def write_obj_sequence(m: Union[MotionSequence, MeshSequence], path: Union[str, Path],
                       skeleton: SkeletonDef = HUMANML3D_SKELETON) -> Path:
    """A directory of frame_XXXX.obj files; skeletons are written as polylines over the bones."""
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(m.coords):
        target = out_dir / f"frame_{i:04d}.obj"
        if isinstance(m, MeshSequence):
            save_obj(frame, m.topology.faces, target)
            continue
        with open(target, "w") as f:
            f.writelines(f"v {x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in frame)
            f.writelines(f"l {p + 1} {j + 1}\n" for p, j in skeleton.bones)
    return out_dir


class AnimationExporter:
    def __init__(self, fmt: AnimFormat = "jsonl"):
        if fmt not in ("jsonl", "obj"):
            raise ValueError(f"Unknown animation format: {fmt}")
        self.fmt = fmt

    def export(self, m: Union[MotionSequence, MeshSequence], path: Union[str, Path]) -> Path:
        if self.fmt == "jsonl":
            return write_jsonl(m, path)
        return write_obj_sequence(m, path)
