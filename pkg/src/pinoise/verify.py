"""Verification suite: gradient, identity, curvature, and stream-audit checks.

Each check computes a measured error against a pinned tolerance and reports
rather than raises. The `corrupt` hook biases one named check's analytic
side by `corrupt_eps` so the suite's sensitivity is itself testable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tape as T
from .encoder import anchor_for
from .noisegen import NoiseMode, gen_params_node
from .objective import (RunConfig, TrainState, feature_gradient_identity, init_state,
                        predict, predict_many, total_loss, total_loss_value)


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def pretty(self) -> str:
        lines = [f"{'check':<28} {'error':>12} {'tolerance':>12}  result"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name:<28} {c.error:>12.3e} {c.tolerance:>12.3e}  {status}"
                         + (f"  ({c.detail})" if c.detail else ""))
        return "\n".join(lines)


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float | None = None) -> float:
    """Coordinatewise |a-b| over max(|a|,|b|), floored at 1e-3 of the data scale.

    The floor keeps coordinates far below the gradient's own magnitude from
    being judged at a precision central differences cannot deliver.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), 1e-300)
    if floor is None:
        floor = 1e-3 * scale
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom, initial=0.0))


def random_state(config: RunConfig, seed: int) -> TrainState:
    """Initialized state with every trainable tensor replaced by a seeded draw.

    The zero-init adapter and heads make many gradients vanish identically;
    the identity checks need a state in general position.
    """
    state = init_state(config)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(99,))))
    for name, arr in state.trainable().items():
        arr[...] = gen.standard_normal(arr.shape) / np.sqrt(max(config.dim_feat, 1))
    return state


def fd_gradient(fn, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function wrt one array, in place."""
    flat = arr.ravel()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = fn()
        flat[i] = orig - h
        lm = fn()
        flat[i] = orig
        out[i] = (lp - lm) / (2.0 * h)
    return out.reshape(arr.shape)


def check_primitive_gradients(seed: int = 0, h: float = 1e-5, bias: float = 0.0) -> float:
    """FD check of every tape primitive on randomized inputs in [-2, 2]."""
    gen = np.random.Generator(np.random.Philox(seed))
    worst = 0.0

    def u(shape):
        return gen.uniform(-2.0, 2.0, size=shape)

    cases = []

    # affine: loss = r . (W x)
    W0, x0, r = u((3, 4)), u(4), u(3)
    cases.append(("affine", [W0, x0],
                  lambda W, x: float(r @ (W @ x)),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.dot(tp.const(r), T.affine(nodes[0], nodes[1])))))
    # affine_t
    W1, x1 = u((4, 3)), u(4)
    cases.append(("affine_t", [W1, x1],
                  lambda W, x: float(r @ (W.T @ x)),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.dot(tp.const(r), T.affine_t(nodes[0], nodes[1])))))
    # attention read: loss = r4 . attend(q, k, v)
    q0, k0, v0, r4 = u(4), u(4), u(4), u(4)
    cases.append(("outer_softmax_attend", [q0, k0, v0],
                  lambda q, k, v: float(r4 @ F.attend(q, k, v)),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.dot(
                      tp.const(r4), T.outer_softmax_attend(*nodes)))))
    # softplus, sigmoid: loss = sum
    s0 = u(5)
    cases.append(("softplus", [s0],
                  lambda x: float(F.softplus(x).sum()),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.vsum(T.softplus(nodes[0])))))
    cases.append(("sigmoid", [s0.copy()],
                  lambda x: float(F.sigmoid(x).sum()),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.vsum(T.sigmoid(nodes[0])))))
    # elementwise product: loss = sum(a * b)
    a0, b0 = u(5), u(5)
    cases.append(("mul", [a0, b0],
                  lambda a, b: float((a * b).sum()),
                  lambda g: _tape_pair(g, lambda tp, nodes: T.vsum(T.mul(nodes[0], nodes[1])))))
    # bce on a logit, both labels
    l0 = u(())
    for y in (0, 1):
        cases.append((f"bce_y{y}", [l0.copy()],
                      lambda l, y=y: F.bce_with_logit(float(l), y),
                      lambda g, y=y: _tape_pair(g, lambda tp, nodes: T.bce_with_logit(nodes[0], y))))

    for name, arrays, raw_fn, tape_fn in cases:
        analytic = tape_fn(arrays)
        for arr, ga in zip(arrays, analytic):
            gf = fd_gradient(lambda: raw_fn(*arrays), arr, h)
            worst = max(worst, max_rel_error(ga + bias, gf))
    return worst


def _tape_pair(arrays, build):
    tp = T.Tape()
    nodes = [tp.input(a) for a in arrays]
    loss = build(tp, nodes)
    table = T.backward(tp, loss)
    return [table[nd] for nd in nodes]


def check_batch_gradients(config: RunConfig, seed: int = 0, batch: int = 32,
                          h: float = 1e-5, bias: float = 0.0,
                          state: TrainState | None = None) -> float:
    """FD check of the full objective gradient for every parameter group."""
    if state is None:
        state = random_state(config, seed)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(7,))))
    batch_x = gen.standard_normal((batch, config.dim_in))
    batch_y = gen.integers(0, 2, size=batch)
    keep = 1.0 - config.dropout_rate
    masks = (gen.random((batch, config.dim_in)) < keep) / keep
    xi = gen.standard_normal((batch, config.m_noise, config.dim_feat))
    mode = NoiseMode("pin")  # exercises every parameter group

    _, table = total_loss(batch_x, batch_y, state, config, mode,
                          fixed_masks=masks, fixed_xi=xi)
    loss_fn = lambda: total_loss_value(batch_x, batch_y, state, config, mode, masks, xi)
    gmax = max(float(np.max(np.abs(g))) for g in table.by_name.values())
    worst = 0.0
    for name, arr in state.trainable().items():
        g_fd = fd_gradient(loss_fn, arr, h)
        analytic = table.by_name[name] + bias
        worst = max(worst, max_rel_error(analytic, g_fd, floor=1e-3 * gmax))
    return worst


def check_feature_identity(config: RunConfig, n_states: int = 100, lam: float | None = None,
                           bias: float = 0.0) -> float:
    """Assembled chain-rule feature gradient vs the tape, over random states."""
    lam = config.lambda_vpn if lam is None else lam
    worst = 0.0
    for s in range(n_states):
        state = random_state(config, 1000 + s)
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(s, spawn_key=(11,))))
        f = gen.standard_normal(config.dim_feat)
        xi = gen.standard_normal(config.dim_feat)
        y = int(gen.integers(0, 2))
        t = anchor_for(y, state.anchors)
        rep = feature_gradient_identity(f, y, t, state, lam, xi)
        worst = max(worst, rep["max_rel_discrepancy"] + bias)
    return worst


def check_mean_alignment(config: RunConfig, seed: int = 0, bias: float = 0.0) -> float:
    """Gradient of the noisy loss wrt the Gaussian mean vs the feature gradient.

    With eps = mu + var * xi and f_tilde = f + eps, dL/dmu must equal the
    loss gradient at f_tilde coordinatewise; measured as max absolute error
    between the tape's mu-gradient and the hand formula for dl/df_tilde.
    """
    state = random_state(config, seed)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(13,))))
    f = gen.standard_normal(config.dim_feat)
    xi = gen.standard_normal(config.dim_feat)
    y = int(gen.integers(0, 2))
    t = anchor_for(y, state.anchors)

    graph = T.Tape()
    mu_node, var_node = gen_params_node(
        graph.input(f, "f"),
        graph.const(state.noisegen.w_key @ t),
        graph.const(state.noisegen.w_value @ t),
        graph.const(state.noisegen.w_query),
        graph.const(state.noisegen.w_mu),
        graph.const(state.noisegen.w_var),
    )
    f_tilde = graph.const(f) + (mu_node + T.mul(var_node, graph.const(xi)))
    logit = T.dot(graph.const(state.heads.noise_w), f_tilde) + graph.const(state.heads.noise_b)
    loss = T.bce_with_logit(logit, y)
    table = T.backward(graph, loss)
    grad_mu = table[mu_node]

    z = float(logit.value)
    grad_ftilde = (float(F.sigmoid(z)) - y) * state.heads.noise_w
    return float(np.max(np.abs(grad_mu + bias - grad_ftilde)))


def check_curvature(config: RunConfig, seed: int = 0, n_xi: int = 100_000,
                    bias: float = 0.0) -> float:
    """Monte Carlo loss inflation vs the Hessian-diagonal second-order term.

    With mu = 0 and var = c (c at 1e-2 of the feature RMS), the mean of
    l(f + var*xi) - l(f) over xi is compared to 0.5 * sum_i H_ii var_i^2
    with H_ii from second-order central differences. Antithetic +/- pairs
    cancel the odd orders so the n_xi budget resolves the O(c^2) signal.
    """
    state = random_state(config, seed)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(17,))))
    f = gen.standard_normal(config.dim_feat)
    y = int(gen.integers(0, 2))
    w, b = state.heads.noise_w, float(state.heads.noise_b)
    c = 1e-2 * float(np.sqrt(np.mean(f ** 2)))
    var = np.full(config.dim_feat, c)

    def loss_at(fv: np.ndarray) -> np.ndarray:
        logit = fv @ w + b
        s = 1.0 if y else -1.0
        return F.softplus(-s * logit)

    half = n_xi // 2
    xi = gen.standard_normal((half, config.dim_feat))
    up = loss_at(f + var * xi)
    down = loss_at(f - var * xi)
    measured = float(np.mean(0.5 * (up + down)) - loss_at(f))

    h = 1e-3
    hess_diag = np.empty(config.dim_feat)
    base = float(loss_at(f))
    for i in range(config.dim_feat):
        e = np.zeros(config.dim_feat)
        e[i] = h
        hess_diag[i] = (float(loss_at(f + e)) - 2.0 * base + float(loss_at(f - e))) / h ** 2
    predicted = 0.5 * float(hess_diag @ (var ** 2))
    return abs((measured + bias) - predicted) / abs(predicted)


def check_stream_audit(config: RunConfig, seed: int = 0, bias: float = 0.0) -> float:
    """Inference must not consume the noise stream; error is the draw count."""
    state = init_state(config)
    gen = np.random.Generator(np.random.Philox(seed))
    x = gen.standard_normal((16, config.dim_in))
    before = state.streams.xi.draws
    predict_many(x, state)
    predict(x[0], state)
    return float(state.streams.xi.draws - before) + bias


_CHECKS = {
    "primitive_gradients": (check_primitive_gradients, 1e-6),
    "batch_gradients": (check_batch_gradients, 1e-6),
    "feature_gradient_identity": (check_feature_identity, 1e-8),
    "mean_alignment": (check_mean_alignment, 1e-12),
    "curvature": (check_curvature, 5e-2),
    "stream_audit": (check_stream_audit, 0.0),
}


def verify_all(config: RunConfig | None = None, state: TrainState | None = None,
               corrupt: str | None = None, corrupt_eps: float = 1e-3,
               fast: bool = False) -> VerificationReport:
    """Run every check; failures are reported, never raised.

    `state` seeds the whole-objective gradient check (a fresh init works;
    its zero blocks simply have zero gradients on both sides). The identity
    checks need parameters in general position and draw their own.
    """
    config = (config or RunConfig()).validate()
    results = []
    for name, (fn, tol) in _CHECKS.items():
        bias = corrupt_eps if corrupt == name else 0.0
        if name == "primitive_gradients":
            error = fn(bias=bias)
        elif name == "batch_gradients":
            error = fn(config, batch=8 if fast else config.batch_size, bias=bias,
                       state=state)
        elif name == "feature_gradient_identity":
            error = fn(config, n_states=10 if fast else 100, bias=bias)
        elif name == "curvature":
            error = fn(config, n_xi=20_000 if fast else 100_000, bias=bias)
        else:
            error = fn(config, bias=bias)
        results.append(CheckResult(name, error, tol, error <= tol))
    return VerificationReport(results)
