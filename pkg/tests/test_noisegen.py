import math

import numpy as np
import pytest

from pinoise import tape as T
from pinoise.noisegen import (BatchContext, GaussianNoise, NoiseGenParams, NoiseMode,
                              gen_params, perturb, sample_noise)
from pinoise.rng import RngStreams


class FixedStream:
    """Stand-in stream returning a preset xi draw."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)
        self.draws = 0

    def normal(self, size=None):
        self.draws += self.values.size
        return self.values


def make_gen(dim_feat=4, r_attn=2, seed=0):
    return NoiseGenParams.init(dim_feat, r_attn, RngStreams(seed).init)


class TestGenParams:
    def test_zero_weights(self):
        gen = make_gen()
        for w in (gen.w_query, gen.w_key, gen.w_value, gen.w_mu, gen.w_var):
            w[...] = 0.0
        mu, var = gen_params(np.ones(4), np.ones(4), gen)
        assert np.array_equal(mu, np.zeros(4))
        assert np.allclose(var, math.log(2), atol=1e-15)

    def test_zero_query_depends_on_anchor_only(self):
        gen = make_gen()
        gen.w_query[...] = 0.0
        t = np.array([0.3, -1.0, 0.5, 2.0])
        mu1, var1 = gen_params(np.zeros(4), t, gen)
        mu2, var2 = gen_params(np.full(4, 9.0), t, gen)
        assert np.array_equal(mu1, mu2)
        assert np.array_equal(var1, var2)

    def test_hand_attention(self):
        gen = NoiseGenParams(*(np.eye(2) for _ in range(5)))
        f = np.array([1.0, 0.0])
        t = np.array([1.0, 0.0])
        mu, var = gen_params(f, t, gen)
        assert np.allclose(mu, [0.73106, 0.5], atol=5e-6)

    def test_deterministic(self):
        gen = make_gen()
        f = np.linspace(-1, 1, 4)
        t = np.linspace(1, -1, 4)
        assert all(np.array_equal(a, b)
                   for a, b in zip(gen_params(f, t, gen), gen_params(f, t, gen)))

    def test_var_positive(self):
        gen = make_gen(seed=3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            _, var = gen_params(rng.standard_normal(4), rng.standard_normal(4), gen)
            assert np.all(var > 0)

    def test_bad_r_attn(self):
        with pytest.raises(ValueError):
            NoiseGenParams.init(4, 3, RngStreams(0).init)

    def test_dimension_mismatch(self):
        with pytest.raises(T.DimensionError):
            gen_params(np.zeros(3), np.zeros(4), make_gen())


class TestSampleNoise:
    def test_forced_zero_xi(self):
        mu = np.array([0.4, -0.2])
        var = np.array([1.0, 2.0])
        noise = sample_noise(mu, var, FixedStream(np.zeros(2)))
        assert np.array_equal(noise.eps, mu)

    def test_arithmetic(self):
        noise = sample_noise(np.array([1.0, -1.0]), np.array([2.0, 3.0]),
                             FixedStream(np.array([0.5, -1.0])))
        assert np.array_equal(noise.eps, [2.0, -4.0])

    def test_reparameterization_bit_exact(self):
        stream = RngStreams(5).xi
        mu = np.linspace(-1, 1, 8)
        var = np.linspace(0.1, 2, 8)
        for _ in range(50):
            noise = sample_noise(mu, var, stream)
            assert np.array_equal(noise.eps, noise.mu + noise.var * noise.xi)

    def test_monte_carlo_mean(self):
        stream = RngStreams(9).xi
        mu = np.array([1.0, -2.0, 0.0])
        var = np.array([0.5, 1.5, 3.0])
        n = 100_000
        total = np.zeros(3)
        for _ in range(n):
            total += sample_noise(mu, var, stream).eps
        assert np.all(np.abs(total / n - mu) <= 3 * var / np.sqrt(n))


class TestPerturb:
    def test_mode_none_identity(self):
        f = np.array([1.0, 2.0])
        f_tilde, noise = perturb(f, NoiseMode("none"), None, None, None, FixedStream(np.zeros(2)))
        assert f_tilde is f
        assert noise is None

    def test_random_zero_sigma(self):
        f = np.array([1.0, 2.0])
        f_tilde, _ = perturb(f, NoiseMode("random", sigma_random=0.0), None, None, None,
                             FixedStream(np.array([3.0, -4.0])))
        assert np.array_equal(f_tilde, f)

    def test_sample_singleton_batch_doubles(self):
        f = np.array([0.5, -1.5])
        mode = NoiseMode("sample", beta_sample=1.0, sigma_sample=0.0)
        ctx = BatchContext(feature_mean=f.copy())
        f_tilde, _ = perturb(f, mode, ctx, None, None, FixedStream(np.ones(2)))
        assert np.allclose(f_tilde, 2 * f)

    def test_sample_requires_context(self):
        with pytest.raises(T.TapeUsageError):
            perturb(np.zeros(2), NoiseMode("sample"), None, None, None, FixedStream(np.zeros(2)))

    def test_pin_uses_generator(self):
        gen = make_gen()
        f = np.linspace(-1, 1, 4)
        t = np.linspace(1, -1, 4)
        mu, var = gen_params(f, t, gen)
        f_tilde, noise = perturb(f, NoiseMode("pin"), None, gen, t, FixedStream(np.zeros(4)))
        assert np.array_equal(noise.mu, mu)
        assert np.array_equal(noise.var, var)
        assert np.allclose(f_tilde, f + mu)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            NoiseMode("gaussian")


def test_pin_gradients_through_generator_match_fd():
    """Gradient of a downstream loss wrt every generator matrix, fixed xi."""
    from pinoise import functional as F
    from pinoise.noisegen import gen_params_node

    gen = make_gen(seed=2)
    rng = np.random.default_rng(4)
    f = rng.standard_normal(4)
    t = rng.standard_normal(4)
    xi = rng.standard_normal(4)
    w_head = rng.standard_normal(4)

    def value():
        mu, var = gen_params(f, t, gen)
        return F.bce_with_logit(float((f + mu + var * xi) @ w_head), 1)

    graph = T.Tape()
    wq = graph.param(gen.w_query, "wq")
    wk = graph.param(gen.w_key, "wk")
    wv = graph.param(gen.w_value, "wv")
    wmu = graph.param(gen.w_mu, "wmu")
    wvar = graph.param(gen.w_var, "wvar")
    f_node = graph.const(f)
    mu_n, var_n = gen_params_node(f_node, T.affine(wk, graph.const(t)),
                                  T.affine(wv, graph.const(t)), wq, wmu, wvar)
    f_tilde = f_node + (mu_n + T.mul(var_n, graph.const(xi)))
    loss = T.bce_with_logit(T.dot(f_tilde, graph.const(w_head)), 1)
    table = T.backward(graph, loss)

    for name, arr in (("wq", gen.w_query), ("wk", gen.w_key), ("wv", gen.w_value),
                      ("wmu", gen.w_mu), ("wvar", gen.w_var)):
        flat = arr.ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + 1e-5
            up = value()
            flat[i] = orig - 1e-5
            down = value()
            flat[i] = orig
            fd[i] = (up - down) / 2e-5
        got = table.by_name[name].ravel()
        scale = max(np.max(np.abs(got)), np.max(np.abs(fd)), 1e-10)
        assert np.max(np.abs(got - fd)) / scale < 1e-6, name
