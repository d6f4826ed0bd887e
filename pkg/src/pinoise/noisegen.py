"""Conditional Gaussian perturbations of the feature vector.

Four modes:
  pin    - cross-attention generator: (mu, var) from the (feature, anchor)
           pair through five shared-shape projections, var through softplus.
  random - zero-mean isotropic Gaussian of fixed scale.
  sample - Gaussian whose mean tracks the batch feature mean.
  none   - identity, no noise object.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tape as T
from .rng import Stream

MODES = ("pin", "random", "sample", "none")


@dataclass
class NoiseGenParams:
    """Five (H, d) projections; H = d / r_attn is the attention bottleneck."""
    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_mu: np.ndarray
    w_var: np.ndarray

    @property
    def dim_feat(self) -> int:
        return self.w_query.shape[1]

    @property
    def dim_hidden(self) -> int:
        return self.w_query.shape[0]

    @classmethod
    def init(cls, dim_feat: int, r_attn: int, init_stream: Stream) -> "NoiseGenParams":
        if r_attn < 1 or dim_feat % r_attn != 0:
            raise ValueError(f"r_attn={r_attn} must be >= 1 and divide d={dim_feat}")
        hidden = dim_feat // r_attn
        std = 1.0 / np.sqrt(dim_feat)
        mats = [init_stream.normal((hidden, dim_feat)) * std for _ in range(5)]
        return cls(*mats)


@dataclass
class GaussianNoise:
    mu: np.ndarray
    var: np.ndarray
    eps: np.ndarray
    xi: np.ndarray


@dataclass
class NoiseMode:
    tag: str
    sigma_random: float = 0.0
    beta_sample: float = 1.0
    sigma_sample: float = 0.0

    def __post_init__(self):
        if self.tag not in MODES:
            raise ValueError(f"unknown noise mode {self.tag!r}; expected one of {MODES}")


@dataclass
class BatchContext:
    """Batch statistics the sample mode conditions on."""
    feature_mean: np.ndarray | None = None


def gen_params(f: np.ndarray, t: np.ndarray, params: NoiseGenParams) -> tuple[np.ndarray, np.ndarray]:
    """(mu, var) of the conditional Gaussian for one (feature, anchor) pair."""
    d = params.dim_feat
    if f.shape != (d,) or t.shape != (d,):
        raise T.DimensionError(f"gen_params: f {f.shape}, t {t.shape}, expected ({d},)")
    q = params.w_query @ f
    k = params.w_key @ t
    v = params.w_value @ t
    a = F.attend(q, k, v)
    mu = params.w_mu.T @ a
    var = F.softplus(params.w_var.T @ a)
    return mu, var


def gen_params_node(f: T.Node, k: T.Node, v: T.Node, wq: T.Node, wmu: T.Node,
                    wvar: T.Node) -> tuple[T.Node, T.Node]:
    """Recorded gen_params; k and v nodes are shared per anchor within a batch."""
    q = T.affine(wq, f)
    a = T.outer_softmax_attend(q, k, v)
    mu = T.affine_t(wmu, a)
    var = T.softplus(T.affine_t(wvar, a))
    return mu, var


def sample_noise(mu: np.ndarray, var: np.ndarray, xi_stream: Stream) -> GaussianNoise:
    """Reparameterized draw eps = mu + var * xi with xi ~ N(0, I)."""
    xi = xi_stream.normal(mu.shape[0])
    return GaussianNoise(mu=mu, var=var, eps=mu + var * xi, xi=xi)


def perturb(f: np.ndarray, mode: NoiseMode, context: BatchContext | None,
            params: NoiseGenParams | None, anchor: np.ndarray | None,
            xi_stream: Stream) -> tuple[np.ndarray, GaussianNoise | None]:
    """Apply one mode's perturbation to a feature: returns (f_tilde, noise)."""
    d = f.shape[0]
    if mode.tag == "none":
        return f, None
    if mode.tag == "pin":
        mu, var = gen_params(f, anchor, params)
    elif mode.tag == "random":
        mu, var = np.zeros(d), np.full(d, mode.sigma_random)
    elif mode.tag == "sample":
        if context is None or context.feature_mean is None:
            raise T.TapeUsageError("sample mode needs batch statistics with the feature mean")
        mu = mode.beta_sample * context.feature_mean
        var = np.full(d, mode.sigma_sample)
    noise = sample_noise(mu, var, xi_stream)
    return f + noise.eps, noise
