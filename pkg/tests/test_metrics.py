import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinoise.data import FeatureRecord
from pinoise.metrics import (UndefinedMetricError, accuracy, average_precision,
                             config_fingerprint, evaluate)
from pinoise.objective import RunConfig
from pinoise.verify import random_state


class TestAccuracy:
    def test_perfect(self):
        assert accuracy([0.9, 0.1], [1, 0]) == 1.0

    def test_tie_counts_as_fake(self):
        assert accuracy([0.5], [1]) == 1.0
        assert accuracy([0.5], [0]) == 0.0

    def test_hand_count(self):
        assert accuracy([0.6, 0.6, 0.4, 0.4], [1, 0, 1, 0]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(UndefinedMetricError):
            accuracy([], [])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        probs = rng.random(50)
        labels = rng.integers(0, 2, 50)
        perm = rng.permutation(50)
        assert accuracy(probs, labels) == accuracy(probs[perm], labels[perm])


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_hand_ranks(self):
        got = average_precision([0.9, 0.8, 0.7], [1, 0, 1])
        assert abs(got - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12

    def test_stable_tie_order(self):
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        # positive second under stable order: precision at rank 2 is 1/2
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5

    def test_no_positives_undefined(self):
        with pytest.raises(UndefinedMetricError):
            average_precision([0.2, 0.4], [0, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_transform_invariant(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        scores = rng.standard_normal(n)
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[0] = 1
        base = average_precision(scores, labels)
        transformed = average_precision(np.exp(2.0 * scores) + 5.0, labels)
        assert abs(base - transformed) < 1e-12

    def test_permutation_invariant_with_distinct_scores(self):
        rng = np.random.default_rng(3)
        scores = rng.permutation(20) / 20.0
        labels = rng.integers(0, 2, 20)
        labels[0] = 1
        perm = rng.permutation(20)
        assert abs(average_precision(scores, labels)
                   - average_precision(scores[perm], labels[perm])) < 1e-12


class TestEvaluate:
    def test_per_domain_metrics(self):
        config = RunConfig(dim_in=8, dim_feat=4, r_attn=2, r_lora=2, lora_alpha=2.0)
        state = random_state(config, 0)
        rng = np.random.default_rng(1)
        records = [FeatureRecord(rng.standard_normal(8).astype(np.float32),
                                 int(rng.integers(0, 2)),
                                 ["train", "id_test", "ood_test"][i % 3])
                   for i in range(60)]
        report = evaluate(records, state, config)
        assert set(report.per_domain) == {"train", "id_test", "ood_test"}
        for metrics in report.per_domain.values():
            assert metrics.n == 20
            assert 0.0 <= metrics.accuracy <= 1.0
            assert 0.0 <= metrics.average_precision <= 1.0
        assert report.config_fingerprint == config_fingerprint(config)
        assert report.seed == config.seed

    def test_fingerprint_changes_with_config(self):
        assert config_fingerprint(RunConfig(seed=0)) != config_fingerprint(RunConfig(seed=1))
