import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cigl.masks import (
    DeterministicMask,
    SparsityPlan,
    WmaAccumulator,
    apply_masks,
    build_sparsity_plan,
    erk_allocate,
    init_mask,
    mask_update_fraction,
    sample_random_mask,
    update_deterministic_mask,
    wma_update,
)
from cigl.rng import substream

from _oracles import prune_regrow_bruteforce


class TestInitMask:
    def test_five_percent_density_keeps_exactly_five_of_hundred(self):
        plan = build_sparsity_plan([(10, 10)], 0.95)
        mask = init_mask([(10, 10)], plan, substream(0, "mask.init"))
        assert mask.nnz() == (5,)

    def test_zero_sparsity_gives_all_ones(self):
        plan = build_sparsity_plan([(4, 6)], 0.0)
        mask = init_mask([(4, 6)], plan, substream(0, "mask.init"))
        assert np.all(mask.layers[0])

    def test_seed_reproducibility(self):
        plan = build_sparsity_plan([(16, 16), (8, 16)], 0.9)
        a = init_mask([(16, 16), (8, 16)], plan, substream(42, "mask.init"))
        b = init_mask([(16, 16), (8, 16)], plan, substream(42, "mask.init"))
        c = init_mask([(16, 16), (8, 16)], plan, substream(43, "mask.init"))
        assert all(np.array_equal(x, y) for x, y in zip(a.layers, b.layers))
        assert any(not np.array_equal(x, y) for x, y in zip(a.layers, c.layers))

    def test_empty_layer_is_an_error(self):
        plan = SparsityPlan(0.999, "uniform", (0.999,))
        with pytest.raises(ValueError, match="no active weights"):
            init_mask([(2, 2)], plan, substream(0, "mask.init"))


class TestErkAllocate:
    def test_single_layer_collapses_to_global(self):
        assert erk_allocate([(10, 10)], 0.9) == [0.9]

    def test_two_layer_budget_and_ordering(self):
        sparsities = erk_allocate([(10, 10), (100, 100)], 0.9)
        densities = [1.0 - s for s in sparsities]
        nnz = [round(d * n) for d, n in zip(densities, [100, 10000])]
        assert sum(nnz) == round(0.1 * 10100) == 1010
        assert densities[0] > densities[1]
        # density ratio must follow the (n_in+n_out)/(n_in*n_out) weights
        assert densities[0] / densities[1] == pytest.approx((20 / 100) / (200 / 10000), rel=1e-9)

    def test_zero_sparsity_is_dense_everywhere(self):
        assert erk_allocate([(3, 4), (7, 2)], 0.0) == [0.0, 0.0]

    def test_clipping_redistributes_budget(self):
        # tiny first layer saturates at density 1; budget still matched
        sparsities = erk_allocate([(2, 2), (64, 64)], 0.5)
        densities = [1.0 - s for s in sparsities]
        assert densities[0] == 1.0
        total = sum(d * n for d, n in zip(densities, [4, 4096]))
        assert total == pytest.approx(0.5 * 4100, abs=1.0)


class TestRandomMask:
    def _mask(self, shape=(100, 100), sparsity=0.0, seed=0):
        plan = build_sparsity_plan([shape], sparsity)
        return init_mask([shape], plan, substream(seed, "mask.init"))

    def test_keep_prob_one_reproduces_topology(self):
        mask = self._mask(sparsity=0.9)
        z = sample_random_mask(mask, 1.0, substream(0, "mask.random"))
        assert np.array_equal(z[0], mask.layers[0])

    def test_keep_prob_zero_gives_empty_mask(self):
        mask = self._mask(sparsity=0.5)
        z = sample_random_mask(mask, 0.0, substream(0, "mask.random"))
        assert not z[0].any()

    def test_keep_fraction_concentrates(self):
        mask = self._mask()  # dense topology: 10,000 active entries
        z = sample_random_mask(mask, 0.9, substream(1, "mask.random"))
        frac = z[0].sum() / 10000.0
        assert 0.88 <= frac <= 0.92

    def test_inactive_positions_stay_zero(self):
        mask = self._mask(sparsity=0.7)
        z = sample_random_mask(mask, 0.9, substream(2, "mask.random"))
        assert not z[0][~mask.layers[0]].any()


class TestApplyMasks:
    def test_identity_masks(self):
        w = np.arange(6, dtype=np.float32).reshape(2, 3)
        ones = np.ones((2, 3), dtype=bool)
        np.testing.assert_array_equal(apply_masks(w, ones, ones), w)

    def test_annihilating_mask(self):
        w = np.ones((2, 3), dtype=np.float32)
        zeros = np.zeros((2, 3), dtype=bool)
        assert not apply_masks(w, zeros, np.ones((2, 3), dtype=bool)).any()

    def test_elementwise_product_by_hand(self):
        w = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32)
        m = np.array([1, 0, 1, 1], dtype=bool)
        z = np.array([1, 1, 0, 1], dtype=bool)
        np.testing.assert_array_equal(apply_masks(w, m, z), [1.0, 0.0, 0.0, 4.0])

    def test_input_not_modified(self):
        w = np.ones((3,), dtype=np.float32)
        apply_masks(w, np.zeros(3, dtype=bool), np.zeros(3, dtype=bool))
        assert np.all(w == 1.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_idempotent_under_reapplication(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.normal(0, 1, (5, 4)).astype(np.float32)
        m = rng.random((5, 4)) < 0.6
        z = rng.random((5, 4)) < 0.8
        once = apply_masks(w, m, z)
        twice = apply_masks(once, m, z)
        np.testing.assert_array_equal(once, twice)


class TestMaskUpdate:
    def test_zero_fraction_is_identity(self):
        mask = DeterministicMask([np.array([True, False, True])], (2,))
        w = [np.array([0.5, 0.0, 0.1], dtype=np.float32)]
        g = [np.array([1.0, 2.0, 3.0], dtype=np.float32)]
        new = update_deterministic_mask(w, g, mask, 0.0)
        assert np.array_equal(new.layers[0], mask.layers[0])

    def test_hand_worked_prune_and_regrow(self):
        # active |w| = [0.1, 0.5, 0.3] at 0..2, inactive |g| = [0.9, 0.05] at 3..4
        mask = DeterministicMask([np.array([True, True, True, False, False])], (3,))
        w = [np.array([0.1, 0.5, 0.3, 0.0, 0.0], dtype=np.float32)]
        g = [np.array([0.0, 0.0, 0.0, 0.9, 0.05], dtype=np.float32)]
        new = update_deterministic_mask(w, g, mask, 1.0 / 3.0)  # k = 1
        assert np.array_equal(new.layers[0], [False, True, True, True, False])

    def test_gradient_ties_activate_lowest_index(self):
        mask = DeterministicMask([np.array([True, True, False, False, False])], (2,))
        w = [np.array([0.4, 0.2, 0.0, 0.0, 0.0], dtype=np.float32)]
        g = [np.ones(5, dtype=np.float32)]
        new = update_deterministic_mask(w, g, mask, 0.5)  # k = 1
        assert np.array_equal(new.layers[0], [True, False, True, False, False])

    def test_clamps_when_no_inactive_positions(self, caplog):
        mask = DeterministicMask([np.ones(4, dtype=bool)], (4,))
        w = [np.arange(4, dtype=np.float32)]
        g = [np.arange(4, dtype=np.float32)]
        with caplog.at_level("WARNING"):
            new = update_deterministic_mask(w, g, mask, 0.5)
        assert np.all(new.layers[0])
        assert "clamped" in caplog.text

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(4, 65))
        # discrete magnitudes force plenty of ties
        w = rng.choice([0.0, 0.1, 0.2, 0.3], size) * rng.choice([-1.0, 1.0], size)
        g = rng.choice([0.0, 0.05, 0.5, 0.9], size) * rng.choice([-1.0, 1.0], size)
        m = rng.random(size) < rng.uniform(0.2, 0.9)
        if not m.any():
            m[0] = True
        frac = float(rng.uniform(0.0, 1.0))
        mask = DeterministicMask([m.copy()], (int(m.sum()),))
        new = update_deterministic_mask([w.astype(np.float32)], [g.astype(np.float32)], mask, frac)
        expected = prune_regrow_bruteforce(w, g, m, frac)
        assert np.array_equal(new.layers[0], expected)
        assert new.layers[0].sum() == m.sum()


class TestUpdateFraction:
    def test_start_is_alpha(self):
        assert mask_update_fraction(0, 0.3, 1000) == pytest.approx(0.3, abs=1e-15)

    def test_end_is_zero(self):
        assert mask_update_fraction(1000, 0.3, 1000) == pytest.approx(0.0, abs=1e-15)

    def test_midpoint_is_half_alpha(self):
        assert mask_update_fraction(500, 0.3, 1000) == pytest.approx(0.15, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            mask_update_fraction(1001, 0.3, 1000)


class TestWmaAccumulator:
    def test_first_update_copies_snapshot(self):
        acc = wma_update(WmaAccumulator(), [np.array([1.0, 2.0], dtype=np.float32)])
        assert acc.n_models == 1
        np.testing.assert_array_equal(acc.means[0], [1.0, 2.0])

    def test_two_snapshots_average(self):
        acc = WmaAccumulator()
        wma_update(acc, [np.array([2.0])])
        wma_update(acc, [np.array([4.0])])
        assert acc.means[0][0] == pytest.approx(3.0, abs=1e-15)
        assert acc.n_models == 2

    def test_constant_snapshots_stay_fixed(self):
        acc = WmaAccumulator()
        snap = [np.full((3, 2), 0.7, dtype=np.float32)]
        for _ in range(17):
            wma_update(acc, snap)
        np.testing.assert_allclose(acc.means[0], np.float64(np.float32(0.7)), rtol=0, atol=1e-15)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 50))
    @settings(max_examples=25, deadline=None)
    def test_running_mean_matches_stored_sample_mean(self, seed, n):
        rng = np.random.default_rng(seed)
        snaps = [[rng.normal(0, 1, (4, 3)).astype(np.float32)] for _ in range(n)]
        acc = WmaAccumulator()
        for s in snaps:
            wma_update(acc, s)
        stored = np.mean(np.stack([s[0].astype(np.float64) for s in snaps]), axis=0)
        assert np.max(np.abs(acc.means[0] - stored)) < 1e-12

    def test_shape_change_rejected(self):
        acc = wma_update(WmaAccumulator(), [np.zeros(3)])
        with pytest.raises(ValueError):
            wma_update(acc, [np.zeros(4)])
