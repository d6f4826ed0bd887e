"""Noise-mode comparison runs on a shared dataset with shared data order."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .data import FeatureRecord, to_arrays
from .metrics import EvalReport, evaluate
from .objective import CurvePoint, RunConfig, TrainState, train


@dataclass
class AblationRun:
    mode: str
    seed: int
    report: EvalReport
    curve: list[CurvePoint]
    state: TrainState


@dataclass
class AblationTable:
    runs: list[AblationRun]
    modes: tuple[str, ...]
    seeds: tuple[int, ...]

    def ood_accuracies(self, mode: str) -> list[float]:
        return [r.report.per_domain["ood_test"].accuracy for r in self.runs if r.mode == mode]

    def ood_aps(self, mode: str) -> list[float]:
        return [r.report.per_domain["ood_test"].average_precision for r in self.runs if r.mode == mode]

    def median_ood(self, mode: str) -> tuple[float, float]:
        return (float(np.median(self.ood_accuracies(mode))),
                float(np.median(self.ood_aps(mode))))

    def rows(self) -> list[tuple]:
        return [(m, *self.median_ood(m)) for m in self.modes]

    def pretty(self) -> str:
        lines = [f"{'mode':<8} {'median OOD acc':>15} {'median OOD AP':>15}"]
        for mode, acc, ap in self.rows():
            lines.append(f"{mode:<8} {acc:>15.4f} {ap:>15.4f}")
        return "\n".join(lines)


def run_ablation(records: list[FeatureRecord], config: RunConfig,
                 modes: tuple[str, ...] = ("none", "random", "sample", "pin"),
                 seeds: tuple[int, ...] = (0, 1, 2),
                 keep_states: bool = False) -> AblationTable:
    """Train one model per (mode, seed); the shuffle stream depends only on
    the seed, so every mode sees identical batch order. Asserts nothing."""
    if len(seeds) < 3:
        raise ValueError("ablation needs at least 3 seeds")
    train_x, train_y = to_arrays(records, "train")
    runs = []
    for mode in modes:
        for seed in seeds:
            run_cfg = dataclasses.replace(config, noise_mode=mode, seed=seed).validate()
            state, curve = train(train_x, train_y, run_cfg)
            report = evaluate(records, state, run_cfg)
            runs.append(AblationRun(mode, seed, report, curve,
                                    state if keep_states else None))
    return AblationTable(runs, tuple(modes), tuple(seeds))
