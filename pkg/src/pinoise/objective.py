"""Joint dual-head objective, Adam, the training loop, and inference.

The total loss is the batch mean of
    loss_base + lambda_vpn * loss_vpn
with loss_base the clean-head BCE on f and loss_vpn the Monte Carlo mean
over m noise draws of the noisy-head BCE on f + eps. Mode "none" keeps the
dual-head structure with eps = 0 and touches no random stream, so a
lambda = 0 run is bit-identical to one with the noise branch absent.

Gradients reach the encoder both through f directly and through the noise
generator's dependence on f.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tape as T
from .encoder import EncoderParams, TextAnchors, anchor_for, dropout_mask, encode, encode_node
from .noisegen import BatchContext, NoiseGenParams, NoiseMode, gen_params_node
from .rng import RngStreams


class ConfigError(ValueError):
    """A run configuration field is missing, unknown, or out of range."""


class NonFiniteGradientError(RuntimeError):
    def __init__(self, step: int, group: str):
        super().__init__(f"non-finite gradient at step {step} in parameter group {group!r}")
        self.step = step
        self.group = group


@dataclass
class RunConfig:
    lambda_vpn: float = 0.2
    m_noise: int = 1
    batch_size: int = 32
    epochs: int = 1
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    dim_in: int = 64
    dim_feat: int = 32
    r_attn: int = 4
    r_lora: int = 6
    lora_alpha: float = 6.0
    dropout_rate: float = 0.8
    noise_mode: str = "pin"
    sigma_random: float | None = None   # None: 0.01 * RMS of training feature norms
    beta_sample: float = 1.0
    sigma_sample: float | None = None   # None: same as sigma_random
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.lambda_vpn < 0:
            raise ConfigError("lambda_vpn must be >= 0")
        if self.m_noise < 1:
            raise ConfigError("m_noise must be >= 1")
        for name in ("batch_size", "dim_in", "dim_feat", "r_attn", "r_lora"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.dim_feat % self.r_attn != 0:
            raise ConfigError(f"dim_feat={self.dim_feat} must be divisible by r_attn={self.r_attn}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.noise_mode not in ("pin", "random", "sample", "none"):
            raise ConfigError(f"unknown noise_mode {self.noise_mode!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Heads:
    """Two independent linear classifiers, one logit each."""
    clean_w: np.ndarray
    clean_b: np.ndarray   # 0-d
    noise_w: np.ndarray
    noise_b: np.ndarray   # 0-d

    @classmethod
    def init(cls, dim_feat: int) -> "Heads":
        return cls(np.zeros(dim_feat), np.zeros(()), np.zeros(dim_feat), np.zeros(()))

    def clean_logit(self, f: np.ndarray) -> float:
        return float(self.clean_w @ f + self.clean_b)

    def noise_logit(self, f: np.ndarray) -> float:
        return float(self.noise_w @ f + self.noise_b)


@dataclass
class TrainState:
    encoder: EncoderParams
    anchors: TextAnchors
    noisegen: NoiseGenParams
    heads: Heads
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    streams: RngStreams

    def trainable(self) -> dict[str, np.ndarray]:
        """Name -> live array for every tensor the optimizer may touch."""
        return {
            "encoder.lora_b": self.encoder.lora_b,
            "encoder.lora_a": self.encoder.lora_a,
            "noisegen.w_query": self.noisegen.w_query,
            "noisegen.w_key": self.noisegen.w_key,
            "noisegen.w_value": self.noisegen.w_value,
            "noisegen.w_mu": self.noisegen.w_mu,
            "noisegen.w_var": self.noisegen.w_var,
            "heads.clean_w": self.heads.clean_w,
            "heads.clean_b": self.heads.clean_b,
            "heads.noise_w": self.heads.noise_w,
            "heads.noise_b": self.heads.noise_b,
        }


def init_state(config: RunConfig, anchors: TextAnchors | None = None) -> TrainState:
    """Fresh state: seeded frozen projection, zero adapter, zero heads.

    Draw order on the init stream is fixed: P, A, anchors, then the five
    generator projections.
    """
    streams = RngStreams(config.seed)
    enc = EncoderParams.init(config.dim_in, config.dim_feat, config.r_lora,
                             config.lora_alpha, config.dropout_rate, streams.init)
    if anchors is None:
        anchors = TextAnchors.synthetic(config.dim_feat, streams.init)
    gen = NoiseGenParams.init(config.dim_feat, config.r_attn, streams.init)
    heads = Heads.init(config.dim_feat)
    state = TrainState(enc, anchors, gen, heads, {}, {}, 0, streams)
    state.adam_m = {k: np.zeros_like(v) for k, v in state.trainable().items()}
    state.adam_v = {k: np.zeros_like(v) for k, v in state.trainable().items()}
    return state


def anchors_from_raw(t_real: np.ndarray, t_fake: np.ndarray, config: RunConfig) -> TextAnchors:
    """Adapt file anchors to feature space.

    Width-d anchors pass through; width-D anchors (native embedding width,
    as a real exporter emits) are mapped by the frozen projection, the same
    map that carries raw features into the engine's space.
    """
    t_real = np.asarray(t_real, dtype=np.float64)
    t_fake = np.asarray(t_fake, dtype=np.float64)
    if t_real.shape != t_fake.shape or t_real.ndim != 1:
        raise ConfigError("anchors must be two equal-length vectors")
    width = t_real.shape[0]
    if width == config.dim_feat:
        return TextAnchors(t_real, t_fake, "loaded-from-file")
    if width == config.dim_in:
        proj = init_state(config).encoder.proj
        return TextAnchors(proj @ t_real, proj @ t_fake, "loaded-from-file")
    raise ConfigError(f"anchor width {width} matches neither dim_feat {config.dim_feat} "
                      f"nor dim_in {config.dim_in}")


def noise_mode_of(config: RunConfig, sigma_random: float | None = None) -> NoiseMode:
    """Resolve the configured mode; sigma defaults are data dependent."""
    sr = config.sigma_random if config.sigma_random is not None else sigma_random
    ss = config.sigma_sample if config.sigma_sample is not None else sr
    return NoiseMode(config.noise_mode, sigma_random=sr or 0.0,
                     beta_sample=config.beta_sample, sigma_sample=ss or 0.0)


def default_sigma_random(features: np.ndarray) -> float:
    """0.01 times the RMS of the training feature norms."""
    norms = np.linalg.norm(features, axis=1)
    return 0.01 * float(np.sqrt(np.mean(norms ** 2)))


def loss_base(f: np.ndarray, y: int, heads: Heads) -> float:
    return F.bce_with_logit(heads.clean_logit(f), y)


def loss_vpn(f: np.ndarray, y: int, anchors: TextAnchors, gen: NoiseGenParams,
             heads: Heads, m: int, mode: NoiseMode, xi_stream,
             context: BatchContext | None = None) -> float:
    """Monte Carlo mean over m draws of the noisy-head BCE on f + eps."""
    from .noisegen import perturb
    t = anchor_for(y, anchors)
    total = 0.0
    for _ in range(m):
        f_tilde, _ = perturb(f, mode, context, gen, t, xi_stream)
        total += F.bce_with_logit(heads.noise_logit(f_tilde), y)
    return total / m


@dataclass
class LossParts:
    total: float
    base: float
    vpn: float
    batch_acc: float


def total_loss(batch_x: np.ndarray, batch_y: np.ndarray, state: TrainState,
               config: RunConfig, mode: NoiseMode | None = None,
               fixed_masks: np.ndarray | None = None,
               fixed_xi: np.ndarray | None = None,
               train_dropout: bool = True) -> tuple[LossParts, T.GradientTable]:
    """Batch-mean loss with gradients for all four parameter groups.

    `fixed_masks` (B, D) and `fixed_xi` (B, m, d) bypass the streams; the
    finite-difference oracle holds them constant across evaluations.
    """
    if mode is None:
        mode = noise_mode_of(config)
    n = batch_x.shape[0]
    if n == 0:
        raise T.TapeUsageError("total_loss on an empty batch")
    graph = T.Tape()
    b_node = graph.param(state.encoder.lora_b, "encoder.lora_b")
    a_node = graph.param(state.encoder.lora_a, "encoder.lora_a")
    wq = graph.param(state.noisegen.w_query, "noisegen.w_query")
    wk = graph.param(state.noisegen.w_key, "noisegen.w_key")
    wv = graph.param(state.noisegen.w_value, "noisegen.w_value")
    wmu = graph.param(state.noisegen.w_mu, "noisegen.w_mu")
    wvar = graph.param(state.noisegen.w_var, "noisegen.w_var")
    cw = graph.param(state.heads.clean_w, "heads.clean_w")
    cb = graph.param(state.heads.clean_b, "heads.clean_b")
    nw = graph.param(state.heads.noise_w, "heads.noise_w")
    nb = graph.param(state.heads.noise_b, "heads.noise_b")

    if mode.tag == "pin":
        t_real = graph.const(state.anchors.t_real)
        t_fake = graph.const(state.anchors.t_fake)
        kv_by_label = {
            0: (T.affine(wk, t_real), T.affine(wv, t_real)),
            1: (T.affine(wk, t_fake), T.affine(wv, t_fake)),
        }

    drate = state.encoder.dropout_rate
    base_terms, f_nodes = [], []
    correct = 0
    for i in range(n):
        x = batch_x[i]
        y = int(batch_y[i])
        if fixed_masks is not None:
            mask = fixed_masks[i]
        elif train_dropout:
            mask = dropout_mask(config.dim_in, drate, state.streams.dropout)
        else:
            mask = None
        f = encode_node(graph, x, b_node, a_node, state.encoder.proj,
                        state.encoder.scaling, mask)
        f_nodes.append(f)
        logit_c = T.dot(cw, f) + cb
        base_terms.append(T.bce_with_logit(logit_c, y))
        correct += int((float(logit_c.value) >= 0.0) == bool(y))

    vpn_terms = []
    context = None
    if mode.tag == "sample":
        # Batch mean of the in-graph features, held as a stopped-gradient statistic.
        context = BatchContext(feature_mean=np.mean([f.value for f in f_nodes], axis=0))
    for i in range(n):
        f = f_nodes[i]
        y = int(batch_y[i])
        if mode.tag == "none":
            vpn_terms.append(T.bce_with_logit(T.dot(nw, f) + nb, y))
            continue
        draws = []
        for j in range(config.m_noise):
            xi = fixed_xi[i, j] if fixed_xi is not None else state.streams.xi.normal(config.dim_feat)
            if mode.tag == "pin":
                k_node, v_node = kv_by_label[y]
                mu, var = gen_params_node(f, k_node, v_node, wq, wmu, wvar)
                eps = mu + T.mul(var, graph.const(xi))
                f_tilde = f + eps
            elif mode.tag == "random":
                f_tilde = f + graph.const(mode.sigma_random * xi)
            else:  # sample
                eps = mode.beta_sample * context.feature_mean + mode.sigma_sample * xi
                f_tilde = f + graph.const(eps)
            logit_n = T.dot(nw, f_tilde) + nb
            draws.append(T.bce_with_logit(logit_n, y))
        vpn_terms.append(T.average(draws) if len(draws) > 1 else draws[0])

    base_mean = T.average(base_terms)
    vpn_mean = T.average(vpn_terms)
    loss = base_mean + T.scale(vpn_mean, config.lambda_vpn)
    table = T.backward(graph, loss)
    parts = LossParts(float(loss.value), float(base_mean.value), float(vpn_mean.value),
                      correct / n)
    return parts, table


def total_loss_value(batch_x: np.ndarray, batch_y: np.ndarray, state: TrainState,
                     config: RunConfig, mode: NoiseMode,
                     masks: np.ndarray | None, xi: np.ndarray | None,
                     fixed_feature_mean: np.ndarray | None = None) -> float:
    """Tape-free forward evaluation of the batch loss.

    Same arithmetic as total_loss but no gradient recording; the
    finite-difference oracle differentiates this path numerically. Sample
    mode treats the batch feature mean as a stopped-gradient statistic, so
    the oracle takes it as a fixed input.
    """
    from .noisegen import gen_params

    n = batch_x.shape[0]
    enc = state.encoder
    base_sum = 0.0
    feats = []
    for i in range(n):
        x = batch_x[i]
        branch_in = x if masks is None else x * masks[i]
        f = enc.proj @ x + enc.scaling * (enc.lora_b @ (enc.lora_a @ branch_in))
        feats.append(f)
        base_sum += F.bce_with_logit(state.heads.clean_logit(f), int(batch_y[i]))
    base = base_sum / n

    f_bar = fixed_feature_mean if fixed_feature_mean is not None else np.mean(feats, axis=0)
    vpn_sum = 0.0
    for i in range(n):
        f = feats[i]
        y = int(batch_y[i])
        if mode.tag == "none":
            vpn_sum += F.bce_with_logit(state.heads.noise_logit(f), y)
            continue
        per_draw = 0.0
        for j in range(config.m_noise):
            xij = xi[i, j]
            if mode.tag == "pin":
                mu, var = gen_params(f, anchor_for(y, state.anchors), state.noisegen)
                eps = mu + var * xij
            elif mode.tag == "random":
                eps = mode.sigma_random * xij
            else:
                eps = mode.beta_sample * f_bar + mode.sigma_sample * xij
            per_draw += F.bce_with_logit(state.heads.noise_logit(f + eps), y)
        vpn_sum += per_draw / config.m_noise
    return base + config.lambda_vpn * vpn_sum / n


def feature_gradient_identity(f: np.ndarray, y: int, t: np.ndarray,
                              state: TrainState, lam: float,
                              xi: np.ndarray) -> dict:
    """Check the chain-rule total feature gradient against the tape.

    Assembles g_final = g_clean + lam * (I + d eps/d f)^T g_noisy with the
    attention Jacobians written out explicitly, then compares to the tape's
    end-to-end dL/df. Returns the per-side vectors and the max relative
    discrepancy.
    """
    gen, heads = state.noisegen, state.heads
    q = gen.w_query @ f
    k = gen.w_key @ t
    v = gen.w_value @ t
    probs = F.row_softmax(np.outer(q, k))
    a = probs @ v
    u = gen.w_var.T @ a
    mu = gen.w_mu.T @ a
    var = F.softplus(u)
    f_tilde = f + mu + var * xi

    z_c = heads.clean_logit(f)
    z_n = heads.noise_logit(f_tilde)
    g_clean = (float(F.sigmoid(z_c)) - y) * heads.clean_w
    g_noisy = (float(F.sigmoid(z_n)) - y) * heads.noise_w

    # d a_i / d q_i = sum_l P_il v_l k_l - a_i * sum_l P_il k_l (diagonal in i)
    c = probs @ (v * k) - a * (probs @ k)
    j_shared = c[:, None] * gen.w_query          # Diag(c) W_q, (H, d)
    j_mu = gen.w_mu.T @ j_shared                 # (d, d)
    j_var = F.sigmoid(u)[:, None] * (gen.w_var.T @ j_shared)
    j_eps = j_mu + xi[:, None] * j_var
    d = f.shape[0]
    g_final = g_clean + lam * ((np.eye(d) + j_eps).T @ g_noisy)

    graph = T.Tape()
    f_node = graph.input(f, "f")
    wq_n = graph.const(gen.w_query)
    wmu_n = graph.const(gen.w_mu)
    wvar_n = graph.const(gen.w_var)
    k_n = graph.const(k)
    v_n = graph.const(v)
    mu_n, var_n = gen_params_node(f_node, k_n, v_n, wq_n, wmu_n, wvar_n)
    f_tilde_n = f_node + (mu_n + T.mul(var_n, graph.const(xi)))
    loss = T.bce_with_logit(T.dot(graph.const(heads.clean_w), f_node) + graph.const(heads.clean_b), y)
    loss_n = T.bce_with_logit(T.dot(graph.const(heads.noise_w), f_tilde_n) + graph.const(heads.noise_b), y)
    total = loss + T.scale(loss_n, lam)
    table = T.backward(graph, total)
    g_tape = table[f_node]

    scale = max(float(np.max(np.abs(g_final))), float(np.max(np.abs(g_tape))), 1e-300)
    discrepancy = float(np.max(np.abs(g_final - g_tape))) / scale
    return {"assembled": g_final, "tape": g_tape, "max_rel_discrepancy": discrepancy}


def adam_step(state: TrainState, grads: dict[str, np.ndarray], config: RunConfig) -> TrainState:
    """Bias-corrected Adam on the trainable tensors; frozen P and anchors untouched."""
    params = state.trainable()
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(state.step, name)
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    for name, p in params.items():
        g = grads[name]
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps_adam)
    state.step = t
    return state


@dataclass
class CurvePoint:
    step: int
    loss_base: float
    loss_vpn: float
    loss_total: float
    batch_acc: float


def train(train_x: np.ndarray, train_y: np.ndarray, config: RunConfig,
          anchors: TextAnchors | None = None) -> tuple[TrainState, list[CurvePoint]]:
    """Shuffled mini-batch training for the configured number of epochs."""
    config.validate()
    if train_x.shape[0] == 0:
        raise ValueError("empty training set")
    train_x = np.asarray(train_x, dtype=np.float64)
    state = init_state(config, anchors)

    sigma_auto = None
    if config.noise_mode in ("random", "sample") and (config.sigma_random is None or config.sigma_sample is None):
        feats = train_x @ state.encoder.effective_map().T
        sigma_auto = default_sigma_random(feats)
    mode = noise_mode_of(config, sigma_auto)

    n = train_x.shape[0]
    curve: list[CurvePoint] = []
    for _ in range(config.epochs):
        order = state.streams.shuffle.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            parts, table = total_loss(train_x[idx], train_y[idx], state, config, mode)
            adam_step(state, table.by_name, config)
            curve.append(CurvePoint(state.step, parts.base, parts.vpn, parts.total, parts.batch_acc))
    return state, curve


def predict(x_raw: np.ndarray, state: TrainState) -> float:
    """Probability of fake from the clean head; noise is never consulted."""
    f = encode(np.asarray(x_raw, dtype=np.float64), state.encoder, mode="eval")
    return float(F.sigmoid(state.heads.clean_logit(f)))


def predict_many(batch_x: np.ndarray, state: TrainState) -> np.ndarray:
    """Vectorized predict over rows of batch_x."""
    feats = np.asarray(batch_x, dtype=np.float64) @ state.encoder.effective_map().T
    return F.sigmoid(feats @ state.heads.clean_w + float(state.heads.clean_b))
