"""Centralised checkpoint registry.

Higher-level code (the generation pipeline, the CLI, the evaluation suite)
asks for trained modules by role and never touches file names itself.
"""

from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

from misc.utility_functions import resolve_results_dir
from services.checkpoint import Checkpoint, load_checkpoint

# ---------------------------------------------------------------------------
# Checkpoint table
# ---------------------------------------------------------------------------
# key -> (checkpoint kind, filename inside the checkpoints directory)
_SPEC: Dict[str, Tuple[str, str]] = {
    "ae": ("ae", "ae.pt"),
    "acmdm": ("acmdm", "acmdm.pt"),
    "controlnet": ("controlnet", "controlnet.pt"),
    "mesh_ae": ("mesh_ae", "mesh_ae.pt"),
    "mesh_acmdm": ("acmdm", "mesh_acmdm.pt"),
    "evaluator": ("evaluator", "evaluator.pt"),
}


def checkpoint_filename(key: str) -> str:
    if key not in _SPEC:
        raise KeyError(f"Unknown checkpoint key: {key} (expected one of {tuple(_SPEC)})")
    return _SPEC[key][1]


class LoaderRegistry:
    """Lazy-loading facade over the trained checkpoints.

    Example
    -------
    >>> loaders = LoaderRegistry()
    >>> ckpt = loaders.acmdm()          # reads acmdm.pt on first call only
    >>> loaders.has("controlnet")       # optional modules may be absent
    """

    def __init__(self, root: Optional[Union[str, Path]] = None) -> None:
        self.root = Path(root) if root is not None else resolve_results_dir("checkpoints")
        self.data: Dict[str, Checkpoint] = {}

    # ---------------------------------------------------------------------
    # Generic helpers
    # ---------------------------------------------------------------------
    def path(self, key: str) -> Path:
        return self.root / checkpoint_filename(key)

    def has(self, key: str) -> bool:
        return key in self.data or self.path(key).exists()

    def load(self, key: str) -> Checkpoint:
        if key in self.data:
            return self.data[key]
        kind, _ = _SPEC[key]
        print(f"📄 Loading {key} checkpoint: {self.path(key)}")
        self.data[key] = load_checkpoint(self.path(key), kind=kind)
        return self.data[key]

    def load_available(self) -> Dict[str, Checkpoint]:
        """Load every checkpoint present on disk; missing optional ones are skipped."""
        for key in _SPEC:
            if self.has(key):
                self.load(key)
        return dict(self.data)

    # ---------------------------------------------------------------------
    # Convenience getters
    # ---------------------------------------------------------------------
    def ae(self) -> Checkpoint:
        return self.load("ae")

    def acmdm(self) -> Checkpoint:
        return self.load("acmdm")

    def controlnet(self) -> Checkpoint:
        return self.load("controlnet")

    def mesh_ae(self) -> Checkpoint:
        return self.load("mesh_ae")

    def mesh_acmdm(self) -> Checkpoint:
        return self.load("mesh_acmdm")

    def evaluator(self) -> Checkpoint:
        return self.load("evaluator")

    # ---------------------------------------------------------------------
    # Dunder methods
    # ---------------------------------------------------------------------
    def __getitem__(self, key: str) -> Checkpoint:
        return self.data[key]

    def __contains__(self, key: str) -> bool:
        return key in self.data

    def __iter__(self) -> Iterator[Tuple[str, Checkpoint]]:
        return iter(self.data.items())
