import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subsetrelax.distributions import enumerate_subset_distribution, sequence_probability
from subsetrelax.errors import SubsetRelaxError, WeightsError
from subsetrelax.samplers import (
    UNIFORM_EPS,
    UniformStream,
    gumbel_keys,
    gumbel_keys_from_uniforms,
    gumbel_topk_batch,
    gumbel_topk_sample,
    hard_topk,
    key_equivalence_check,
    reservoir_keys,
    reservoir_keys_from_uniforms,
    reservoir_log_keys_from_uniforms,
    wrs_sample,
    wrs_sample_batch,
)
from subsetrelax.stats import EmpiricalDistribution, chi_square_gof, total_variation


class TestUniformStream:
    def test_reproducible(self):
        a = UniformStream(5).uniform((3, 4))
        b = UniformStream(5).uniform((3, 4))
        assert a.tobytes() == b.tobytes()

    def test_row_major_draw_order(self):
        s = UniformStream(9)
        rows = np.stack([s.uniform(4) for _ in range(3)])
        assert np.array_equal(rows, UniformStream(9).uniform((3, 4)))

    def test_open_interval(self):
        u = UniformStream(0).uniform(100_000)
        assert u.min() >= UNIFORM_EPS and u.max() <= 1 - UNIFORM_EPS

    def test_spawn_is_deterministic(self):
        a = [c.seed for c in UniformStream(1).spawn(3)]
        assert a == [c.seed for c in UniformStream(1).spawn(3)]
        assert len(set(a)) == 3


class TestGumbelKeys:
    def test_unit_weight(self):
        assert gumbel_keys_from_uniforms(np.log([1.0]), np.array([math.exp(-1)]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_log_weight_shift(self):
        assert gumbel_keys_from_uniforms(np.log([math.e]), np.array([math.exp(-1)]))[0] == pytest.approx(1.0, abs=1e-15)

    def test_consumes_n_draws(self):
        s = UniformStream(3)
        gumbel_keys([1, 2, 3], s)
        nxt = s.uniform(1)
        ref = UniformStream(3).uniform(4)[3]
        assert nxt[0] == ref

    def test_zero_weight_sentinel(self):
        k = gumbel_keys([1, 0, 2], UniformStream(0))
        assert np.isneginf(k.values[1])
        assert list(k.active) == [True, False, True]

    def test_gumbel_max_marginals(self, ref_w):
        idx = gumbel_topk_batch(ref_w, 1, 100_000, UniformStream(17))[:, 0]
        freq = np.bincount(idx, minlength=4) / idx.size
        assert 0.5 * np.abs(freq - ref_w).sum() < 0.01


class TestReservoirKeys:
    def test_range_and_zero(self):
        r = reservoir_keys([0.5, 0, 2], UniformStream(1)).values
        assert r[1] == 0.0
        assert np.all((r >= 0) & (r <= 1))

    def test_formula(self):
        u = np.array([0.25, 0.5])
        assert np.allclose(reservoir_keys_from_uniforms(np.array([2.0, 0.5]), u), [0.5, 0.25])
        assert np.allclose(reservoir_log_keys_from_uniforms(np.array([2.0, 0.5]), u), np.log([0.5, 0.25]))

    def test_tiny_weight_beats_zero_weight(self):
        # u ** (1/w) underflows to 0 here and would tie with the zero-weight item
        w = np.array([0.0, 0.005, 1.0])
        u = np.array([0.5, 0.0145, 0.3])
        assert reservoir_keys_from_uniforms(w, u)[1] == 0.0
        log_keys = reservoir_log_keys_from_uniforms(w, u)
        assert np.isneginf(log_keys[0]) and np.isfinite(log_keys[1])
        assert hard_topk(log_keys, 2) == (2, 1)

    def test_ranking_uses_logs(self):
        keys = reservoir_keys([0.0, 0.005, 1.0], UniformStream(0))
        assert hard_topk(keys, 2) == hard_topk(keys.log_values, 2)
        assert 0 not in hard_topk(keys, 2)


class TestHardTopk:
    def test_basic(self):
        assert hard_topk([3.0, 1.0, 2.0], 2) == (0, 2)

    def test_ties_to_lower_index(self):
        assert hard_topk([5, 5, 1], 2) == (0, 1)
        assert hard_topk([1, 5, 5], 1) == (1,)

    def test_neg_inf_last(self):
        assert hard_topk([-np.inf, -3.0, -np.inf], 2) == (1, 0)

    def test_k_too_large(self):
        with pytest.raises(SubsetRelaxError):
            hard_topk([1, 2], 3)

    def test_gumbel_subset_frequencies(self, ref_w):
        gen = UniformStream(8)
        samples = [hard_topk(gumbel_keys(ref_w, gen), 2) for _ in range(10_000)]
        emp = EmpiricalDistribution.from_samples(4, 2, samples)
        assert total_variation(enumerate_subset_distribution(ref_w, 2), emp) < 0.03


class TestWrsSample:
    def test_single_item(self):
        for seed in range(5):
            assert wrs_sample([1], 1, seed) == (0,)

    def test_zero_weights_excluded(self):
        for seed in range(50):
            assert sorted(wrs_sample([0.5, 0.5, 0, 0], 2, seed)) == [0, 1]

    def test_sequence_frequencies(self, ref_w):
        samples = wrs_sample_batch(ref_w, 2, 100_000, UniformStream(99))
        seqs, counts = np.unique(samples, axis=0, return_counts=True)
        emp = {tuple(s): c / samples.shape[0] for s, c in zip(seqs, counts)}
        tv = 0.5 * sum(
            abs(emp.get((i, j), 0.0) - sequence_probability(ref_w, (i, j)))
            for i in range(4) for j in range(4) if i != j
        )
        assert tv < 0.02

    def test_batch_matches_single(self, ref_w):
        s = UniformStream(4)
        single = [wrs_sample(ref_w, 2, s) for _ in range(20)]
        batch = wrs_sample_batch(ref_w, 2, 20, UniformStream(4))
        assert [tuple(r) for r in batch] == single

    def test_errors(self):
        with pytest.raises(WeightsError):
            wrs_sample([1, 0, 0], 2, 0)
        with pytest.raises(SubsetRelaxError):
            wrs_sample([1, 1], 0, 0)
        with pytest.raises(WeightsError):
            wrs_sample([], 1, 0)

    def test_determinism(self, ref_w):
        a = wrs_sample_batch(ref_w, 3, 50, UniformStream(12))
        b = wrs_sample_batch(ref_w, 3, 50, UniformStream(12))
        assert a.tobytes() == b.tobytes()


class TestKeyEquivalence:
    def test_distinct_weights(self):
        for seed in range(200):
            assert key_equivalence_check([0.1, 0.2, 0.3, 0.4, 0.7], 3, seed)

    def test_equal_weights(self):
        assert all(key_equivalence_check([1, 1, 1, 1], 2, seed) for seed in range(1000))

    def test_with_zeros(self):
        assert all(key_equivalence_check([0, 0.3, 0, 1.2, 0.5], 3, seed) for seed in range(200))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=12), st.floats(1e-3, 1e3), st.integers(0, 2**32))
def test_scale_invariance_of_selection(w, c, seed):
    k = max(1, len(w) // 2)
    u = UniformStream(seed).uniform(len(w))
    g1 = gumbel_keys_from_uniforms(np.log(w), u)
    g2 = gumbel_keys_from_uniforms(np.log(np.array(w) * c), u)
    assert np.allclose(g2 - g1, math.log(c), atol=1e-9)
    assert hard_topk(g1, k) == hard_topk(g2, k)


def test_gumbel_subsets_chi_square():
    w = np.array([0.05, 0.15, 0.2, 0.25, 0.35])
    for k in (2, 3):
        samples = gumbel_topk_batch(w, k, 100_000, UniformStream(41 + k))
        emp = EmpiricalDistribution.from_samples(5, k, samples)
        assert chi_square_gof(enumerate_subset_distribution(w, k), emp).pvalue > 0.001


def test_single_and_batch_gumbel_agree(ref_w):
    s = UniformStream(6)
    single = [gumbel_topk_sample(ref_w, 2, s) for _ in range(10)]
    assert [tuple(r) for r in gumbel_topk_batch(ref_w, 2, 10, UniformStream(6))] == single
