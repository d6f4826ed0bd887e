"""Embedding backends: a real vision-language model and an offline stub.

The stub projects per-image pixel statistics through a seeded random matrix
so the export pipeline and file format are testable without model weights.
Both backends emit the two label-prompt anchors ("A real photo." /
"A fake photo.") alongside the image embeddings.
"""
from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

PROMPT_REAL = "A real photo."
PROMPT_FAKE = "A fake photo."
STUB_DIM = 768
_STAT_LEN = 16


class StubBackend:
    """Seeded random projection of pixel statistics; no model weights needed."""

    def __init__(self, dim: int = STUB_DIM, seed: int = 0):
        self.dim = dim
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))
        self._proj = gen.standard_normal((dim, _STAT_LEN)) / np.sqrt(_STAT_LEN)
        self._seed = seed

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        stats = np.stack([self._statistics(img) for img in images])
        return (stats @ self._proj.T).astype(np.float32)

    def embed_prompts(self) -> tuple[np.ndarray, np.ndarray]:
        return (self._prompt_vector(PROMPT_REAL), self._prompt_vector(PROMPT_FAKE))

    def _prompt_vector(self, prompt: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self._seed}:{prompt}".encode()).digest()
        gen = np.random.Generator(np.random.Philox(np.frombuffer(digest[:16], dtype=np.uint64)))
        vec = gen.standard_normal(self.dim)
        return (vec / np.linalg.norm(vec)).astype(np.float32)

    @staticmethod
    def _statistics(img: Image.Image) -> np.ndarray:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        per_channel = arr.reshape(-1, 3)
        quantiles = np.quantile(per_channel, [0.25, 0.5, 0.75], axis=0).ravel()
        stats = np.concatenate([
            per_channel.mean(axis=0),
            per_channel.std(axis=0),
            quantiles,
            [arr.mean(), arr.std(), float(arr.shape[0]), float(arr.shape[1])],
        ])
        return stats[:_STAT_LEN]


class ClipBackend:
    """Pretrained CLIP through transformers; imported lazily so the stub path
    never needs torch."""

    def __init__(self, model_id: str, device: str = "cpu"):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        torch = self._torch
        inputs = self.processor(images=images, return_tensors="pt").to(self.device)
        with torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def embed_prompts(self) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        inputs = self.processor(text=[PROMPT_REAL, PROMPT_FAKE], return_tensors="pt",
                                padding=True).to(self.device)
        with torch.no_grad():
            feats = self.model.get_text_features(**inputs).cpu().numpy().astype(np.float32)
        return feats[0], feats[1]
