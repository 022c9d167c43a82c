import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subsetrelax.distributions import enumerate_subset_distribution
from subsetrelax.errors import SubsetRelaxError, WeightsError
from subsetrelax.relaxation import (
    relax_subset_sample,
    relax_subset_sample_batch,
    relaxed_topk,
    relaxed_topk_batch,
    relaxed_topk_hard,
    topk_mask,
)
from subsetrelax.samplers import UniformStream, gumbel_keys, hard_topk
from subsetrelax.stats import EmpiricalDistribution, total_variation


def reference_relaxation(s, k, t):
    """Direct transcription of the recurrence with plain log(1 - p)."""
    alpha = np.array(s, dtype=np.float64)
    mass = np.zeros_like(alpha)
    for _ in range(k):
        z = alpha / t
        p = np.exp(z - z.max())
        p /= p.sum()
        mass += p
        with np.errstate(divide="ignore"):
            alpha = alpha + np.log(1 - p)
    return mass


scores = st.lists(st.floats(-5, 5), min_size=1, max_size=10)


class TestExamples:
    def test_counterexample(self):
        out = relaxed_topk([1.0, 2.0], 2, 0.4)
        assert np.allclose(out.mass, [1.0528808, 0.9471192], atol=1e-6)
        assert out.mass[0] > 1.0

    def test_counterexample_closed_form(self):
        # two items: p1 = softmax, p2 from the reweighted pair
        t = 0.4
        q = 1 / (1 + math.exp(1 / t))
        a0 = math.log(1 - q) + 1
        a1 = math.log(q) + 2
        r = 1 / (1 + math.exp((a1 - a0) / t))
        assert relaxed_topk([1.0, 2.0], 2, t).mass[0] == pytest.approx(q + r, abs=1e-12)

    def test_k_equals_n_low_temperature(self):
        out = relaxed_topk([0.3, -1.2, 2.0, 0.0], 4, 0.01)
        assert np.allclose(out.mass, 1.0, atol=1e-9)

    def test_k_equals_n_is_not_constant(self):
        # with every item selected the mass still depends on the scores at t > 0
        out = relaxed_topk([0.3, -1.2, 2.0, 0.0], 4, 1.0)
        assert out.mass.sum() == pytest.approx(4.0)
        assert np.abs(out.mass - 1.0).max() > 0.5

    def test_low_temperature(self):
        out = relaxed_topk([0.0, 1.0, 2.0, 3.0], 2, 0.01)
        assert np.abs(out.mass - [0, 0, 1, 1]).max() < 1e-3

    def test_wide_spread_low_temperature(self):
        out = relaxed_topk([0.0, -50.0, -100.0, 3.0], 3, 0.01)
        assert np.allclose(out.mass, [1, 1, 0, 1], atol=1e-9)

    def test_single_step_is_softmax(self):
        s = np.array([0.5, -0.3, 1.2])
        e = np.exp(s / 2.0)
        assert np.allclose(relaxed_topk(s, 1, 2.0).mass, e / e.sum())

    def test_uniform_scores(self):
        assert np.allclose(relaxed_topk(np.zeros(5), 2, 0.7).mass, 0.4)

    def test_hard_mask(self):
        assert list(relaxed_topk_hard([0.1, 3.0, 2.0, -1.0], 2, 1.0)) == [0, 1, 1, 0]
        assert list(relaxed_topk([0.1, 3.0, 2.0], 2, 1.0).hard()) == [0, 1, 1]

    def test_topk_mask_ties(self):
        assert topk_mask([[1, 1, 1], [0, 2, 2]], 1).tolist() == [[1, 0, 0], [0, 1, 0]]


class TestValidation:
    @pytest.mark.parametrize("k", [0, 4])
    def test_k_range(self, k):
        with pytest.raises(SubsetRelaxError, match="k"):
            relaxed_topk([1, 2, 3], k, 1.0)

    @pytest.mark.parametrize("t", [0.0, -1.0, math.inf, math.nan])
    def test_temperature(self, t):
        with pytest.raises(SubsetRelaxError, match="temperature"):
            relaxed_topk([1, 2, 3], 1, t)

    def test_nonfinite_scores(self):
        with pytest.raises(SubsetRelaxError):
            relaxed_topk([1, np.nan], 1, 1.0)
        with pytest.raises(SubsetRelaxError):
            relaxed_topk([], 1, 1.0)


class TestInvariants:
    @settings(max_examples=200, deadline=None)
    @given(scores, st.integers(1, 10), st.floats(0.05, 20))
    def test_mass_and_steps(self, s, k, t):
        k = min(k, len(s))
        out = relaxed_topk(s, k, t)
        assert out.mass.sum() == pytest.approx(k, abs=1e-9)
        assert np.allclose(out.steps.sum(axis=1), 1.0)
        assert np.all(out.steps >= 0) and np.all(out.mass >= 0)
        assert np.all(out.mass <= k + 1e-12)

    @settings(max_examples=200, deadline=None)
    @given(scores, st.integers(1, 10), st.floats(0.2, 20))
    def test_matches_plain_recurrence(self, s, k, t):
        k = min(k, len(s))
        assert np.allclose(relaxed_topk(s, k, t).mass, reference_relaxation(s, k, t), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(scores, st.integers(1, 10), st.floats(0.05, 20), st.floats(-100, 100))
    def test_shift_invariance(self, s, k, t, c):
        k = min(k, len(s))
        a = relaxed_topk(s, k, t).mass
        b = relaxed_topk(np.array(s) + c, k, t).mass
        assert np.allclose(a, b, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(scores, st.integers(1, 10), st.floats(0.05, 20), st.randoms(use_true_random=False))
    def test_permutation_equivariance(self, s, k, t, r):
        k = min(k, len(s))
        perm = list(range(len(s)))
        r.shuffle(perm)
        a = relaxed_topk(s, k, t).mass
        b = relaxed_topk(np.array(s)[perm], k, t).mass
        assert np.allclose(a[perm], b, atol=1e-9)

    def test_batch_matches_rows(self):
        s = np.random.default_rng(0).normal(size=(7, 6))
        batch = relaxed_topk_batch(s, 3, 0.8)
        assert np.allclose(batch, [relaxed_topk(r, 3, 0.8).mass for r in s], atol=1e-14)


class TestConsistency:
    def test_order_preserved_for_t_at_least_one(self):
        gen = np.random.default_rng(1)
        for _ in range(300):
            n = int(gen.integers(1, 17))
            k = int(gen.integers(1, n + 1))
            t = float(gen.choice([1, 2, 5, 10]))
            s = gen.normal(scale=3.0, size=n)
            a = relaxed_topk(s, k, t).mass
            order = np.argsort(-s)
            assert np.all(np.diff(a[order]) <= 1e-12)

    def test_violation_below_one(self):
        # below t = 1 order can flip: the lower score gets the larger mass
        a = relaxed_topk([1.0, 2.0], 2, 0.4).mass
        assert a[0] > a[1]

    def test_hard_limit(self):
        gen = np.random.default_rng(2)
        for _ in range(50):
            n = int(gen.integers(2, 12))
            k = int(gen.integers(1, n + 1))
            s = gen.permutation(n) * 0.1 + gen.normal()
            mass = relaxed_topk(s, k, 0.01).mass
            exact = topk_mask(s, k)
            assert np.abs(mass - exact).max() < 1e-3


class TestSubsetSample:
    def test_single_item(self):
        out = relax_subset_sample([1.0], 1, 0.5, UniformStream(0))
        assert out.mass.tolist() == [1.0]

    def test_zero_weights_get_zero_mass(self):
        w = [0.5, 0.5, 0, 0]
        checked = 0
        for seed in range(50):
            out = relax_subset_sample(w, 2, 0.01, UniformStream(seed))
            assert np.all(out.mass[2:] == 0.0)
            assert out.mass.sum() == pytest.approx(2.0)
            assert out.steps.shape == (2, 4)
            keys = gumbel_keys(w, UniformStream(seed)).values
            # the limit is only reached once the two keys are separated
            if abs(keys[0] - keys[1]) >= 0.1:
                assert np.abs(out.mass - [1, 1, 0, 0]).max() < 1e-3
                checked += 1
        assert checked > 40

    def test_k_exceeds_support(self):
        with pytest.raises(WeightsError):
            relax_subset_sample([1, 0, 0], 2, 1.0, UniformStream(0))
        with pytest.raises(WeightsError):
            relax_subset_sample_batch([1, 0, 0], 2, 1.0, 3, UniformStream(0))

    def test_same_keys_as_sampler(self, ref_w):
        s1, s2 = UniformStream(3), UniformStream(3)
        for _ in range(20):
            out = relax_subset_sample(ref_w, 2, 1.0, s1)
            keys = gumbel_keys(ref_w, s2)
            assert np.allclose(out.mass, relaxed_topk(keys.values, 2, 1.0).mass)

    def test_batch_matches_single_calls(self):
        w = [0.2, 0, 0.5, 1.0, 0.3]
        s = UniformStream(5)
        single = np.array([relax_subset_sample(w, 2, 0.7, s).mass for _ in range(25)])
        batch = relax_subset_sample_batch(w, 2, 0.7, 25, UniformStream(5))
        assert np.allclose(single, batch, atol=1e-14)

    def test_hardened_matches_hard_topk_for_t_at_least_one(self, ref_w):
        # consistency means rounding the relaxed mass recovers the exact sample
        for t in (1.0, 2.0, 10.0):
            s1, s2 = UniformStream(8), UniformStream(8)
            for _ in range(200):
                mass = relax_subset_sample(ref_w, 2, t, s1).mass
                keys = gumbel_keys(ref_w, s2)
                assert set(np.flatnonzero(topk_mask(mass, 2))) == set(hard_topk(keys, 2))

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_hardened_distribution(self, ref_w, t):
        masks = topk_mask(relax_subset_sample_batch(ref_w, 2, t, 10_000, UniformStream(7)), 2)
        emp = EmpiricalDistribution.from_masks(masks)
        assert total_variation(enumerate_subset_distribution(ref_w, 2), emp) < 0.03
