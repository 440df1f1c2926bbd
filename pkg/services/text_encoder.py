"""
Text encoders producing the d_c = 512 caption embedding.

`HashBagTextEncoder` is dependency-free and deterministic: words are hashed
into a fixed random matrix, mean-pooled and unit-normalized. `ClipTextEncoder`
adapts an installed CLIP ViT-B/32 model (the `clip` package is imported only
when this encoder is constructed).
"""
import hashlib
import re
from typing import List, Protocol, Sequence, Union

import numpy as np
import torch

from pipeline.motion_data.motion import TextPrompt

TEXT_DIM = 512
_WORD = re.compile(r"[a-z0-9']+")


class TextEncoderInterface(Protocol):
    name: str
    dim: int

    def encode(self, prompt: TextPrompt) -> np.ndarray:
        ...


def _as_prompt(p: Union[str, TextPrompt]) -> TextPrompt:
    return p if isinstance(p, TextPrompt) else TextPrompt(p)


class HashBagTextEncoder:
    def __init__(self, dim: int = TEXT_DIM, n_buckets: int = 4096, seed: int = 0):
        self.dim = dim
        self.n_buckets = n_buckets
        self.seed = seed
        self.name = f"hashbag-{n_buckets}x{dim}-s{seed}"
        rng = np.random.default_rng(seed)
        self._table = rng.standard_normal((n_buckets, dim)) / np.sqrt(dim)

    def _bucket(self, word: str) -> int:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.n_buckets

    def tokenize(self, text: str) -> List[str]:
        words = _WORD.findall(text.lower())
        return words or [text.strip().lower()]

    def encode(self, prompt: Union[str, TextPrompt]) -> np.ndarray:
        prompt = _as_prompt(prompt)
        rows = [self._bucket(w) for w in self.tokenize(prompt.text)]
        vec = self._table[rows].mean(axis=0)
        return (vec / np.linalg.norm(vec)).astype(np.float32)


class ClipTextEncoder:
    def __init__(self, model_name: str = "ViT-B/32", device: str = "cpu"):
        try:
            import clip
        except ImportError as e:
            raise ImportError(
                "ClipTextEncoder needs the `clip` package (pip install git+https://github.com/openai/CLIP.git)"
            ) from e
        self._clip = clip
        self.model, _ = clip.load(model_name, device=device, jit=False)
        self.model.eval()
        self.device = device
        self.dim = TEXT_DIM
        self.name = f"clip-{model_name}"

    @torch.no_grad()
    def encode(self, prompt: Union[str, TextPrompt]) -> np.ndarray:
        prompt = _as_prompt(prompt)
        tokens = self._clip.tokenize([prompt.text], truncate=True).to(self.device)
        emb = self.model.encode_text(tokens).float()[0]
        return (emb / emb.norm()).cpu().numpy()


def encode_text(enc: TextEncoderInterface, p: Union[str, TextPrompt]) -> np.ndarray:
    return enc.encode(_as_prompt(p))


def encode_batch(enc: TextEncoderInterface, prompts: Sequence[Union[str, TextPrompt]]) -> torch.Tensor:
    return torch.from_numpy(np.stack([encode_text(enc, p) for p in prompts]))


_HASHBAG_NAME = re.compile(r"hashbag-(\d+)x(\d+)-s(\d+)$")


def make_text_encoder(name: str = "hashbag", **kwargs) -> TextEncoderInterface:
    """Build an encoder from a short name or from the `name` an encoder reports."""
    if name == "hashbag":
        return HashBagTextEncoder(**kwargs)
    match = _HASHBAG_NAME.match(name)
    if match:
        n_buckets, dim, seed = (int(g) for g in match.groups())
        return HashBagTextEncoder(dim=dim, n_buckets=n_buckets, seed=seed)
    if name == "clip" or name.startswith("clip-"):
        return ClipTextEncoder(**kwargs)
    raise KeyError(f"Unknown text encoder: {name}")
