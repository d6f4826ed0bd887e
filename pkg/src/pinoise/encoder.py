"""Frozen projection plus trainable low-rank adapter, and the label anchors.

The encoder maps raw inputs x in R^D to features f in R^d through a frozen
seeded projection P and a rank-r adapter B A scaled by alpha/r. Only B and A
train. Dropout acts on the adapter branch input, inverted, train mode only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .rng import Stream


@dataclass
class EncoderParams:
    proj: np.ndarray       # (d, D), frozen
    lora_b: np.ndarray     # (d, r), trainable, starts at zero
    lora_a: np.ndarray     # (r, D), trainable
    rank: int
    alpha: float
    dropout_rate: float

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    @property
    def dim_in(self) -> int:
        return self.proj.shape[1]

    @property
    def dim_feat(self) -> int:
        return self.proj.shape[0]

    @classmethod
    def init(cls, dim_in: int, dim_feat: int, rank: int, alpha: float,
             dropout_rate: float, init_stream: Stream) -> "EncoderParams":
        """Frozen P and A from seeded Gaussians at std 1/sqrt(D); B at zero."""
        std = 1.0 / np.sqrt(dim_in)
        proj = init_stream.normal((dim_feat, dim_in)) * std
        lora_a = init_stream.normal((rank, dim_in)) * std
        lora_b = np.zeros((dim_feat, rank))
        return cls(proj, lora_b, lora_a, rank, alpha, dropout_rate)

    def effective_map(self) -> np.ndarray:
        """P + (alpha/r) B A, the eval-mode linear map."""
        return self.proj + self.scaling * (self.lora_b @ self.lora_a)


@dataclass
class TextAnchors:
    t_real: np.ndarray
    t_fake: np.ndarray
    source: str  # "synthetic-seeded" or "loaded-from-file"

    @classmethod
    def synthetic(cls, dim_feat: int, init_stream: Stream) -> "TextAnchors":
        """Two seeded unit vectors; regeneration with the same seed is bit-identical."""
        t_real = init_stream.normal(dim_feat)
        t_real /= np.linalg.norm(t_real)
        t_fake = init_stream.normal(dim_feat)
        t_fake /= np.linalg.norm(t_fake)
        return cls(t_real, t_fake, "synthetic-seeded")


def anchor_for(y: int, anchors: TextAnchors) -> np.ndarray:
    return anchors.t_fake if y else anchors.t_real


def dropout_mask(dim_in: int, rate: float, stream: Stream) -> np.ndarray:
    """Inverted dropout mask: entries are 0 or 1/(1-rate)."""
    keep = 1.0 - rate
    return (stream.uniform(dim_in) < keep) / keep


def encode(x_raw: np.ndarray, params: EncoderParams, mode: str = "eval",
           dropout_stream: Stream | None = None) -> np.ndarray:
    """f = P x + (alpha/r) B (A drop(x)); eval mode applies no dropout."""
    x_raw = np.asarray(x_raw, dtype=np.float64)
    if x_raw.shape != (params.dim_in,):
        raise T.DimensionError(f"encode: x has shape {x_raw.shape}, expected ({params.dim_in},)")
    if mode == "train":
        if dropout_stream is None:
            raise T.TapeUsageError("train-mode encode needs a dropout stream")
        branch_in = x_raw * dropout_mask(params.dim_in, params.dropout_rate, dropout_stream)
    else:
        branch_in = x_raw
    return params.proj @ x_raw + params.scaling * (params.lora_b @ (params.lora_a @ branch_in))


def encode_node(graph: T.Tape, x_raw: np.ndarray, b_node: T.Node, a_node: T.Node,
                proj: np.ndarray, scaling: float, mask: np.ndarray | None) -> T.Node:
    """Recorded encode for training; `mask` is the pre-drawn dropout mask or None."""
    branch_in = x_raw if mask is None else x_raw * mask
    lora = T.affine(b_node, T.affine(a_node, graph.const(branch_in)))
    return T.scale(lora, scaling) + graph.const(proj @ x_raw)
