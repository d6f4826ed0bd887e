import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinoise.data import (DOMAINS, FeatureRecord, FormatError, ShortcutSpec,
                          bayes_accuracy_causal, gen_shortcut_dataset, read_features,
                          shortcut_directions, to_arrays, true_posterior_fake,
                          write_features)

FAST_SPEC = ShortcutSpec(dim=16, n_train=3000, n_id=800, n_ood=800, seed=5)


def random_records(rng, n, dim):
    domains = [DOMAINS[rng.integers(0, 3)] for _ in range(n)]
    return [FeatureRecord(rng.standard_normal(dim).astype(np.float32),
                          int(rng.integers(0, 2)), d) for n_, d in enumerate(domains)]


class TestSpecValidation:
    def test_defaults_valid(self):
        spec = ShortcutSpec().validate()
        assert spec.dim == 64 and spec.n_train == 20000
        assert spec.alpha_shortcut > spec.alpha_causal

    def test_shortcut_must_dominate(self):
        with pytest.raises(ValueError):
            ShortcutSpec(alpha_causal=2.0, alpha_shortcut=1.0).validate()

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ShortcutSpec.from_dict({"n": 10})

    def test_bad_policy(self):
        with pytest.raises(ValueError):
            ShortcutSpec(ood_policy="shuffled").validate()


class TestGeneration:
    def test_directions_orthonormal(self):
        u_c, u_s = shortcut_directions(ShortcutSpec())
        assert abs(np.linalg.norm(u_c) - 1) < 1e-12
        assert abs(np.linalg.norm(u_s) - 1) < 1e-12
        assert abs(u_c @ u_s) < 1e-12

    def test_noiseless_construction(self):
        spec = ShortcutSpec(dim=8, sigma=0.0, p_corr_train=1.0, n_train=50, n_id=0,
                            n_ood=0, seed=1)
        u_c, u_s = shortcut_directions(spec)
        for rec in gen_shortcut_dataset(spec):
            sign = 1.0 if rec.y else -1.0
            expected = spec.alpha_causal * sign * u_c + spec.alpha_shortcut * sign * u_s
            assert np.allclose(rec.x_raw, expected.astype(np.float32), atol=1e-6)

    def test_split_sizes_and_domains(self):
        recs = gen_shortcut_dataset(FAST_SPEC)
        counts = {d: sum(r.domain == d for r in recs) for d in DOMAINS}
        assert counts == {"train": 3000, "id_test": 800, "ood_test": 800}

    def test_label_balance(self):
        recs = gen_shortcut_dataset(FAST_SPEC)
        for domain in DOMAINS:
            ys = [r.y for r in recs if r.domain == domain]
            n = len(ys)
            assert abs(np.mean(ys) - 0.5) <= 3 * math.sqrt(n) / (2 * n)

    def test_shortcut_correlation_per_domain(self):
        spec = ShortcutSpec(dim=16, n_train=8000, n_id=0, n_ood=8000,
                            p_corr_train=0.9, seed=3)
        _, u_s = shortcut_directions(spec)
        recs = gen_shortcut_dataset(spec)
        for domain, target in (("train", 2 * 0.9 - 1), ("ood_test", 0.0)):
            chosen = [r for r in recs if r.domain == domain]
            signs = np.array([np.sign(r.x_raw @ u_s.astype(np.float32)) for r in chosen])
            ys = np.array([1.0 if r.y else -1.0 for r in chosen])
            corr = float(np.mean(signs * ys))
            # sigma noise attenuates the sign correlation; allow the analytic
            # attenuation 2*Phi(alpha_s/sigma)-1 on the target
            atten = 2 * bayes_accuracy_causal(
                ShortcutSpec(alpha_causal=spec.alpha_shortcut, sigma=spec.sigma)) - 1
            se = 3 / math.sqrt(len(chosen))
            assert abs(corr - target * atten) <= se

    def test_flipped_policy_anticorrelated(self):
        spec = ShortcutSpec(dim=16, n_train=0, n_id=0, n_ood=4000, sigma=0.0,
                            ood_policy="flipped", seed=9)
        _, u_s = shortcut_directions(spec)
        recs = gen_shortcut_dataset(spec)
        for r in recs:
            sign = 1.0 if r.y else -1.0
            assert np.sign(r.x_raw @ u_s.astype(np.float32)) == -sign

    def test_bayes_accuracy_value(self):
        assert abs(bayes_accuracy_causal(ShortcutSpec()) - 0.8413447) < 1e-6

    def test_causal_probe_matches_bayes_on_ood(self):
        spec = ShortcutSpec(dim=32, n_train=0, n_id=0, n_ood=10_000, seed=11)
        u_c, _ = shortcut_directions(spec)
        recs = gen_shortcut_dataset(spec)
        x, y = to_arrays(recs, "ood_test")
        acc = np.mean((x @ u_c >= 0) == (y == 1))
        assert abs(acc - bayes_accuracy_causal(spec)) < 0.01

    def test_shortcut_probe_train_vs_ood(self):
        spec = ShortcutSpec(dim=32, n_train=10_000, n_id=0, n_ood=10_000, seed=13)
        _, u_s = shortcut_directions(spec)
        recs = gen_shortcut_dataset(spec)
        x, y = to_arrays(recs, "train")
        train_acc = np.mean((x @ u_s >= 0) == (y == 1))
        expected = bayes_accuracy_causal(ShortcutSpec(alpha_causal=2.0, sigma=1.0))
        assert abs(train_acc - expected) < 0.015      # ~0.9772
        x, y = to_arrays(recs, "ood_test")
        ood_acc = np.mean((x @ u_s >= 0) == (y == 1))
        assert abs(ood_acc - 0.5) < 0.02

    def test_reproducible(self):
        a = gen_shortcut_dataset(FAST_SPEC)
        b = gen_shortcut_dataset(FAST_SPEC)
        assert all(np.array_equal(r1.x_raw, r2.x_raw) and r1.y == r2.y
                   and r1.domain == r2.domain for r1, r2 in zip(a, b))


class TestTruePosterior:
    def test_perfect_correlation_train_posterior(self):
        spec = ShortcutSpec(dim=8, seed=2)
        u_c, u_s = shortcut_directions(spec)
        x = np.stack([3.0 * (u_c + 2 * u_s), -3.0 * (u_c + 2 * u_s)])
        p = true_posterior_fake(x, spec, "train")
        assert p[0] > 0.999 and p[1] < 0.001

    def test_ood_posterior_ignores_shortcut(self):
        spec = ShortcutSpec(dim=8, seed=2)
        u_c, u_s = shortcut_directions(spec)
        base = true_posterior_fake(np.stack([0.7 * u_c]), spec, "ood_test")[0]
        shifted = true_posterior_fake(np.stack([0.7 * u_c + 5 * u_s]), spec, "ood_test")[0]
        assert abs(base - shifted) < 1e-9
        from pinoise.functional import sigmoid
        expected = float(sigmoid(np.asarray(2 * spec.alpha_causal * 0.7 / spec.sigma ** 2)))
        assert abs(base - expected) < 1e-12


class TestPinfFormat:
    def test_empty_file_is_twenty_bytes(self, tmp_path):
        path = tmp_path / "empty.pinf"
        write_features(path, [])
        assert path.stat().st_size == 20
        records, anchors = read_features(path)
        assert records == [] and anchors is None

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        records = random_records(rng, 64, 12)
        anchors = (rng.standard_normal(6).astype(np.float32),
                   rng.standard_normal(6).astype(np.float32))
        path = tmp_path / "rt.pinf"
        write_features(path, records, anchors)
        back, anchors_back = read_features(path)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert np.array_equal(a.x_raw, b.x_raw)
            assert a.y == b.y and a.domain == b.domain
        assert np.array_equal(anchors[0], anchors_back[0])
        assert np.array_equal(anchors[1], anchors_back[1])

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        records = random_records(rng, 10, 4)
        p1, p2 = tmp_path / "a.pinf", tmp_path / "b.pinf"
        write_features(p1, records)
        write_features(p2, records)
        assert p1.read_bytes() == p2.read_bytes()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(0, 40), st.integers(1, 9),
           st.booleans())
    def test_round_trip_randomized(self, tmp_path_factory, seed, n, dim, with_anchors):
        rng = np.random.default_rng(seed)
        records = random_records(rng, n, dim)
        anchors = None
        if with_anchors:
            anchors = (rng.standard_normal(3).astype(np.float32),
                       rng.standard_normal(3).astype(np.float32))
        path = tmp_path_factory.mktemp("pinf") / "x.pinf"
        write_features(path, records, anchors)
        back, anchors_back = read_features(path)
        assert all(np.array_equal(a.x_raw, b.x_raw) and a.y == b.y and a.domain == b.domain
                   for a, b in zip(records, back))
        if with_anchors:
            assert np.array_equal(anchors[0], anchors_back[0])
        else:
            assert anchors_back is None

    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.pinf"
        path.write_bytes(b"XINF" + bytes(16))
        with pytest.raises(FormatError) as err:
            read_features(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v9.pinf"
        path.write_bytes(b"PINF" + struct.pack("<HHQI", 9, 0, 0, 4))
        with pytest.raises(FormatError) as err:
            read_features(path)
        assert err.value.offset == 4

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "trunc.pinf"
        good = tmp_path / "good.pinf"
        write_features(good, [FeatureRecord(np.zeros(4, np.float32), 1, "train")])
        path.write_bytes(good.read_bytes()[:-3])
        with pytest.raises(FormatError) as err:
            read_features(path)
        assert "truncated" in str(err.value)

    def test_anchor_flag_without_anchor_block(self, tmp_path):
        path = tmp_path / "flag.pinf"
        path.write_bytes(b"PINF" + struct.pack("<HHQI", 1, 1, 0, 4))
        with pytest.raises(FormatError):
            read_features(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = tmp_path / "trail.pinf"
        write_features(path, [])
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            read_features(path)

    def test_bad_label_byte(self, tmp_path):
        path = tmp_path / "label.pinf"
        blob = b"PINF" + struct.pack("<HHQI", 1, 0, 1, 1) + struct.pack("<f", 0.5) + bytes([7, 0])
        path.write_bytes(blob)
        with pytest.raises(FormatError) as err:
            read_features(path)
        assert err.value.offset == 24

    def test_inconsistent_dims_rejected_on_write(self, tmp_path):
        records = [FeatureRecord(np.zeros(4, np.float32), 0, "train"),
                   FeatureRecord(np.zeros(5, np.float32), 1, "train")]
        with pytest.raises(ValueError):
            write_features(tmp_path / "dims.pinf", records)
