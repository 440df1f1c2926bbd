import json
import random
import hashlib
import time
from typing import Dict
from pathlib import Path
from functools import wraps

import numpy as np
import torch

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
TEMPLATE_NAME = "config.template.json"


def timeit(method):
    """Print wall time of each call; the latest duration is kept on `last_elapsed`."""
    @wraps(method)
    def timed(*args, **kwargs):
        start = time.perf_counter()
        out = method(*args, **kwargs)
        timed.last_elapsed = time.perf_counter() - start
        print(f"⏱️ '{method.__name__}' took {timed.last_elapsed:.2f} s")
        return out
    timed.last_elapsed = None
    return timed


def get_config_path(filename: Path) -> Path:
    """`filename` inside the repository's config/ directory."""
    return CONFIG_DIR / filename


def load_config(config_path: Path) -> Dict:
    with open(config_path, encoding="utf-8") as fh:
        return json.load(fh)


def load_project_config(filename: str = "config.json") -> Dict:
    """
    Read config/<filename>; a missing user config falls back to the
    committed template with a warning.
    """
    path = get_config_path(Path(filename))
    if not path.exists():
        template = get_config_path(Path(TEMPLATE_NAME))
        print(f"⚠️ {path.name} not found, using {template.name}")
        path = template
    return load_config(path)


def config_section(*keys: str) -> Dict:
    """Return a nested section of the project config, or {} if missing."""
    node = load_project_config()
    for key in keys:
        node = node.get(key, {})
    return node


def resolve_results_dir(results_key: str) -> Path:
    folder = Path(config_section("paths", "results")[results_key]).expanduser().resolve()
    folder.mkdir(parents=True, exist_ok=True)
    return folder


def _next_available_path(base_filename: str, ext: str, results_key: str) -> Path:
    """<name><ext> in the results directory, or '<name> (n)<ext>' for the first free n."""
    folder = resolve_results_dir(results_key)
    stem = base_filename[: -len(ext)] if base_filename.endswith(ext) else base_filename
    candidate = folder / f"{stem}{ext}"
    n = 0
    while candidate.exists():
        n += 1
        candidate = folder / f"{stem} ({n}){ext}"
    return candidate


def set_seed(seed: int) -> None:
    """Seed python, numpy and torch for a reproducible single-threaded run."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def state_checksum(module: torch.nn.Module) -> str:
    """sha256 over every parameter and buffer, in registration order."""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
