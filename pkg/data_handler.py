import json
from typing import List, Optional, Tuple, Union
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from misc.utility_functions import load_project_config
from pipeline.motion_data.humanml3d import humanml3d_to_absolute
from pipeline.motion_data.motion import DEFAULT_FPS, SPLITS, DatasetManifest, ManifestEntry, MotionSequence, Split

# ---------------------------------------------------------------------------
# .acm motion container
# ---------------------------------------------------------------------------
ACM_MAGIC = b"ACMD"
ACM_VERSION = 1
ACM_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("frames", "<u4"),
    ("joints", "<u4"),
    ("channels", "<u4"),
    ("fps", "<f4"),
])


class MotionFileError(ValueError):
    pass


class BadMagicError(MotionFileError):
    pass


class VersionMismatchError(MotionFileError):
    pass


class TruncatedPayloadError(MotionFileError):
    pass


def save_motion(m: MotionSequence, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array(
        [(ACM_MAGIC, ACM_VERSION, m.frames, m.joints, 3, m.fps)], dtype=ACM_HEADER
    )
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(m.coords, dtype="<f4").tobytes())
    return path


def load_motion(path: Union[str, Path]) -> MotionSequence:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Motion file not found: {path}")
    raw = path.read_bytes()

    if raw[:4] != ACM_MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r} in {path}")
    if len(raw) < ACM_HEADER.itemsize:
        raise TruncatedPayloadError(f"truncated header in {path}")
    header = np.frombuffer(raw[:ACM_HEADER.itemsize], dtype=ACM_HEADER)[0]
    if int(header["version"]) != ACM_VERSION:
        raise VersionMismatchError(
            f"version mismatch in {path}: file has {int(header['version'])}, expected {ACM_VERSION}"
        )
    if int(header["channels"]) != 3:
        raise MotionFileError(f"expected 3 channels, got {int(header['channels'])} in {path}")

    shape = (int(header["frames"]), int(header["joints"]), 3)
    expected = int(np.prod(shape)) * 4
    payload = raw[ACM_HEADER.itemsize:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"truncated payload in {path}: {len(payload)} of {expected} bytes"
        )
    if len(payload) > expected:
        raise MotionFileError(f"{len(payload) - expected} trailing bytes in {path}")
    coords = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return MotionSequence(coords, fps=float(header["fps"]))


# ---------------------------------------------------------------------------
# Manifest and topology files
# ---------------------------------------------------------------------------
def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, indent=2)
    return path


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    with open(path, "r") as f:
        return DatasetManifest.from_dict(json.load(f))


def load_obj_topology(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read the v/f subset of a Wavefront OBJ file.

    Polygons are fan-triangulated; texture/normal indices are ignored.
    Returns (vertices [N, 3], faces [F, 3] zero-based).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Topology file not found: {path}")
    vertices, faces = [], []
    with open(path, "r") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    return np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def save_obj(vertices: np.ndarray, faces: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.writelines(f"v {x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in vertices)
        f.writelines(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in faces)
    return path


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------
def resolve_data_dir(config_section: str) -> Path:
    """
    Resolves the data directory configured under paths.data.<config_section>.
    """
    config = load_project_config()
    data_dir = Path(config["paths"]["data"][config_section]).expanduser().resolve()
    if not data_dir.exists():
        raise FileNotFoundError(f"Data directory not found: {data_dir}")
    return data_dir


def save_corpus(motions: List[MotionSequence], manifest: DatasetManifest, root: Union[str, Path]) -> Path:
    root = Path(root)
    for m, entry in zip(motions, manifest.entries):
        save_motion(m, root / entry.motion_path)
    save_manifest(manifest, root / "manifest.json")
    print(f"💾 Wrote {len(motions)} motions to {root}")
    return root


class DatasetLoader:
    def __init__(self, root: Optional[Union[str, Path]] = None, config_section: str = "corpus") -> None:
        self.data_dir = Path(root) if root is not None else resolve_data_dir(config_section)
        self.manifest_path = self.data_dir / "manifest.json"
        self.manifest: DatasetManifest = DatasetManifest()
        self.motions: List[MotionSequence] = []

    @property
    def dataset_name(self) -> str:
        return self.data_dir.name

    def load_dataset(self, split: Optional[Split] = None) -> Tuple[List[MotionSequence], List[ManifestEntry]]:
        print(f"📄 Loading manifest: {self.manifest_path}")
        self.manifest = load_manifest(self.manifest_path)
        entries = self.manifest.entries if split is None else self.manifest.select_split(split)
        self.motions = [load_motion(self.data_dir / e.motion_path) for e in entries]
        print(f"✅ Loaded {len(self.motions)} motions ({split or 'all splits'}).")
        return self.motions, entries

    def summary(self) -> pd.DataFrame:
        df = self.manifest.to_frame()
        lengths = {e.id: m.frames for e, m in zip(self.manifest.entries, self.motions)}
        df["frames"] = df["id"].map(lengths)
        df["n_captions"] = df["captions"].map(len)
        return df


# ---------------------------------------------------------------------------
# HumanML3D ingestion
# ---------------------------------------------------------------------------
def load_humanml3d_captions(path: Union[str, Path]) -> List[str]:
    """Caption files hold `caption#tokens#start#end` per line; only the caption is kept."""
    with open(path, "r") as f:
        captions = [line.split("#")[0].strip() for line in f]
    return [c for c in captions if c]


def convert_humanml3d(src_root: Union[str, Path], out_root: Union[str, Path], fps: float = DEFAULT_FPS,
                      limit: Optional[int] = None) -> DatasetManifest:
    """
    Convert new_joint_vecs/<id>.npy + texts/<id>.txt, listed in {train,val,test}.txt,
    into .acm files and a manifest. Items without features or captions are skipped.
    """
    src_root, out_root = Path(src_root), Path(out_root)
    entries: List[ManifestEntry] = []
    skipped = 0
    for split in SPLITS:
        split_file = src_root / f"{split}.txt"
        if not split_file.exists():
            print(f"⚠️ No split file {split_file}, skipping {split}")
            continue
        ids = [line.strip() for line in split_file.read_text().splitlines() if line.strip()]
        for item in tqdm(ids[:limit], desc=f"convert-{split}"):
            vec_path = src_root / "new_joint_vecs" / f"{item}.npy"
            text_path = src_root / "texts" / f"{item}.txt"
            if not vec_path.exists() or not text_path.exists():
                skipped += 1
                continue
            captions = load_humanml3d_captions(text_path)
            if not captions:
                skipped += 1
                continue
            m = humanml3d_to_absolute(np.load(vec_path), fps=fps)
            entry = ManifestEntry(id=item, motion_path=f"{item}.acm", captions=captions, split=split)
            save_motion(m, out_root / entry.motion_path)
            entries.append(entry)
    manifest = DatasetManifest(entries)
    save_manifest(manifest, out_root / "manifest.json")
    print(f"✅ Converted {len(entries)} HumanML3D motions ({skipped} skipped) → {out_root}")
    return manifest
