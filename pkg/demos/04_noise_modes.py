"""Compare the four perturbation modes on one benchmark with shared data
order, and verify the second-order story behind the variance term.

Run:  python3 demos/04_noise_modes.py   (about a minute)
"""
import numpy as np

from pinoise.ablation import run_ablation
from pinoise.data import ShortcutSpec, bayes_accuracy_causal, gen_shortcut_dataset
from pinoise.objective import RunConfig
from pinoise.verify import check_curvature

spec = ShortcutSpec(n_train=4000, n_id=1000, n_ood=1000, seed=0)
records = gen_shortcut_dataset(spec)

table = run_ablation(records, RunConfig(), modes=("none", "random", "sample", "pin"),
                     seeds=(0, 1, 2))
print("median out-of-distribution metrics per mode (3 seeds, shared data order):")
print(table.pretty())
print(f"\ncausal-direction bound: {bayes_accuracy_causal(spec):.4f}")
print("note: at this scale the modes bunch together; the noise branch reaches")
print("the clean path only through the low-rank adapter, so mode separation is")
print("within seed noise (see README, Limitations).")

# The variance term prices curvature: with zero mean and variance c per
# coordinate, the expected loss inflation equals half the Hessian-diagonal
# weighted sum of squared variances, to second order.
err = check_curvature(RunConfig(), seed=0, n_xi=100_000)
print(f"\ncurvature identity, Monte Carlo vs Hessian diagonal: rel err {err:.3%}")
