import numpy as np
import pytest

from evchain.hashing import FeatureCache, FeatureHasher, tokenize


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("A Red-Bridge!") == ["a", "red", "bridge"]

    def test_empty(self):
        assert tokenize("") == []

    def test_digits_kept(self):
        assert tokenize("1889 built") == ["1889", "built"]

    def test_runs_of_separators(self):
        assert tokenize("a,,b  --  c") == ["a", "b", "c"]


class TestFeaturize:
    def test_empty_text_is_zero(self, small_hasher):
        assert not small_hasher.featurize("").any()

    def test_deterministic(self, small_hasher):
        a = small_hasher.featurize("the same text twice")
        b = small_hasher.featurize("the same text twice")
        assert np.array_equal(a, b)

    def test_fresh_instance_matches(self):
        a = FeatureHasher(128, (1, 2), 9).featurize("hello world")
        b = FeatureHasher(128, (1, 2), 9).featurize("hello world")
        assert np.array_equal(a, b)

    def test_seed_changes_features(self):
        a = FeatureHasher(128, (1,), 0).featurize("hello world")
        b = FeatureHasher(128, (1,), 1).featurize("hello world")
        assert not np.array_equal(a, b)

    def test_order_sensitive_bigrams(self):
        # "a b" vs "b a" under order-2 features: distinct with probability
        # >= 1 - 2/dim per seed; over 100 seeds allow a couple of collisions.
        dim = 256
        same = 0
        for seed in range(100):
            hasher = FeatureHasher(dim, (2,), seed)
            if np.array_equal(hasher.featurize("a b"), hasher.featurize("b a")):
                same += 1
        assert same <= 3

    def test_signed_counts_accumulate(self, small_hasher):
        idx, val = small_hasher.featurize_sparse("dog dog dog")
        # unigram "dog" appears three times -> one bucket at +-3 plus bigrams
        assert 3.0 in np.abs(val)

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            FeatureHasher(dim=1)
        with pytest.raises(ValueError):
            FeatureHasher(ngram_orders=())

    def test_config_round_trip(self, small_hasher):
        clone = FeatureHasher.from_config(small_hasher.config())
        assert np.array_equal(clone.featurize("round trip"),
                              small_hasher.featurize("round trip"))


def test_feature_cache_returns_same_arrays(small_hasher):
    cache = FeatureCache(small_hasher)
    first = cache("some text")
    second = cache("some text")
    assert first is second
    idx, val = first
    ridx, rval = small_hasher.featurize_sparse("some text")
    assert np.array_equal(idx, ridx) and np.array_equal(val, rval)
