"""Variational positive-incentive noise training engine.

A conditional cross-attention Gaussian noise generator trained jointly with
a low-rank-adapted encoder and dual classification heads, plus the
planted-shortcut benchmark, metrics, and a verification suite for the
analytic gradient and curvature identities.
"""
from .data import (FeatureRecord, FormatError, ShortcutSpec, gen_shortcut_dataset,
                   read_features, write_features)
from .encoder import EncoderParams, TextAnchors, anchor_for, encode
from .metrics import EvalReport, accuracy, average_precision, evaluate
from .noisegen import GaussianNoise, NoiseGenParams, NoiseMode, gen_params, perturb, sample_noise
from .objective import (RunConfig, TrainState, adam_step, init_state, loss_base, loss_vpn,
                        predict, predict_many, total_loss, train)
from .verify import VerificationReport, verify_all

__version__ = "0.1.0"
