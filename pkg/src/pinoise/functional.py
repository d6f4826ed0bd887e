"""Plain-ndarray numerics shared by the tape primitives and the eval paths.

Everything here is stateless float64 math in numerically stable branch
forms. The tape module wraps these for gradient recording; evaluation and
the independent oracle checks call them directly.
"""
from __future__ import annotations

import numpy as np


def softplus(x: np.ndarray | float) -> np.ndarray:
    """ln(1 + exp(x)) in the stable form max(x, 0) + log1p(exp(-|x|))."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Logistic function, stable on both tails."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logit(logit: float, y: int) -> float:
    """Binary cross entropy on a raw logit; y=1 means fake."""
    s = 1.0 if y else -1.0
    return float(softplus(-s * logit))


def row_softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, shift-invariant per row."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """a = row_softmax(q k^T) v for equal-length vectors, no scaling."""
    probs = row_softmax(np.outer(q, k))
    return probs @ v
