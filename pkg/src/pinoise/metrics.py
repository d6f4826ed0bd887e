"""Accuracy and average precision, and per-domain model evaluation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .data import DOMAINS, FeatureRecord, to_arrays
from .objective import RunConfig, TrainState, predict_many


class UndefinedMetricError(ValueError):
    """Metric has no value on this input (e.g. AP with no positives)."""


def accuracy(probs, labels) -> float:
    """Fraction of prob >= 0.5 decisions matching the labels; ties count as fake."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape or probs.size == 0:
        raise UndefinedMetricError("accuracy needs equal-length nonempty inputs")
    return float(np.mean((probs >= 0.5) == (labels == 1)))


def average_precision(scores, labels) -> float:
    """Mean precision at the ranks of positives, descending scores, stable ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.size == 0:
        raise UndefinedMetricError("average_precision needs equal-length nonempty inputs")
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise UndefinedMetricError("average_precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = (labels[order] == 1)
    ranks = np.arange(1, scores.size + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits].sum() / n_pos)


@dataclass
class DomainMetrics:
    n: int
    accuracy: float
    average_precision: float


@dataclass
class EvalReport:
    per_domain: dict[str, DomainMetrics]
    config_fingerprint: str
    seed: int

    def rows(self) -> list[tuple]:
        return [(d, m.n, m.accuracy, m.average_precision) for d, m in self.per_domain.items()]

    def pretty(self) -> str:
        lines = [f"{'domain':<10} {'n':>6} {'accuracy':>10} {'avg_prec':>10}"]
        for d, n, acc, ap in self.rows():
            lines.append(f"{d:<10} {n:>6} {acc:>10.4f} {ap:>10.4f}")
        return "\n".join(lines)


def config_fingerprint(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluate(records: list[FeatureRecord], state: TrainState, config: RunConfig) -> EvalReport:
    """Clean-head metrics per domain present in the records."""
    per_domain: dict[str, DomainMetrics] = {}
    for domain in DOMAINS:
        x, y = to_arrays(records, domain)
        if x.shape[0] == 0:
            continue
        probs = predict_many(x, state)
        per_domain[domain] = DomainMetrics(
            n=x.shape[0],
            accuracy=accuracy(probs, y),
            average_precision=average_precision(probs, y),
        )
    return EvalReport(per_domain, config_fingerprint(config), config.seed)
