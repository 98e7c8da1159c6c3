import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privrobust.bounds import shrunk_margin
from privrobust.errors import Infeasible, ReservedLabelCollision
from privrobust.measures import chi2_generator, f_information, parse_measure, tv_generator
from privrobust.preprocess import (
    SINK,
    MergeMap,
    apply_merge,
    apply_merge_samples,
    check_merge_monotone,
    fit_merge_map,
    lift_mechanism,
    merge_rare_symbols,
)
from privrobust.prob import empirical, marginal_x, new_joint, new_mechanism, rng_for, sample

from conftest import random_mechanism


def rare_joint():
    return new_joint([[0.3, 0.15, 0.1, 0.02], [0.2, 0.15, 0.05, 0.03]])


class TestMergeRareSymbols:
    def test_example(self):
        merged, mmap = merge_rare_symbols(rare_joint(), 0.2)
        assert mmap.kept == ("x0", "x1")
        assert merged.x_alphabet.labels == ("x0", "x1", SINK)
        assert marginal_x(merged)[-1] == pytest.approx(0.20)
        np.testing.assert_allclose(merged.mass[:, :2], rare_joint().mass[:, :2])

    def test_gamma_zero_passthrough(self):
        merged, mmap = merge_rare_symbols(rare_joint(), 0.0)
        assert mmap.merged == ()
        assert merged == rare_joint()

    def test_gamma_one_single_sink(self):
        merged, _ = merge_rare_symbols(rare_joint(), 1.0)
        assert merged.x_alphabet.labels == (SINK,)
        np.testing.assert_allclose(merged.mass[:, 0], rare_joint().mass.sum(1))

    def test_gamma_one_point_mass(self):
        merged, mmap = merge_rare_symbols(new_joint([[0.4, 0.0], [0.6, 0.0]]), 1.0)
        assert mmap.kept == ("x0",)
        assert merged.x_alphabet.labels == ("x0", SINK)

    def test_collision(self):
        q = new_joint([[0.5, 0.5]], x_alphabet=["a", SINK])
        with pytest.raises(ReservedLabelCollision):
            merge_rare_symbols(q, 0.1)

    def test_samples_commute(self):
        q = rare_joint()
        ss = sample(q, 3000, 1)
        merged, mmap = merge_rare_symbols(ss, 0.1)
        np.testing.assert_array_equal(empirical(apply_merge_samples(ss, mmap)).mass, merged.mass)

    def test_map_round_trip(self):
        _, mmap = merge_rare_symbols(rare_joint(), 0.2)
        assert MergeMap.from_dict(mmap.to_dict()) == mmap
        assert mmap("x3") == SINK and mmap("x1") == "x1" and mmap("unseen") == SINK

    def test_map_applies_to_new_data(self):
        _, mmap = merge_rare_symbols(rare_joint(), 0.2)
        other = new_joint([[0.25, 0.25, 0.25, 0.25]])
        out = apply_merge(other, mmap)
        np.testing.assert_allclose(out.mass, [[0.25, 0.25, 0.5]])

    @given(st.integers(0, 10**6), st.floats(0.0, 1.0))
    @settings(max_examples=60)
    def test_invariants(self, seed, gamma):
        rng = rng_for(seed)
        q = new_joint(rng.dirichlet(np.ones(8) * 0.5).reshape(2, 4), normalize=True)
        merged, mmap = merge_rare_symbols(q, gamma)
        assert abs(merged.mass.sum() - 1) <= 1e-12
        px = marginal_x(merged)
        for lbl in mmap.kept:
            assert px[merged.x_alphabet.index(lbl)] >= gamma
        np.testing.assert_allclose(merged.mass.sum(1), q.mass.sum(1), atol=1e-15)

    @given(st.integers(0, 10**6))
    @settings(max_examples=40)
    def test_m_bar_improves(self, seed):
        rng = rng_for(seed)
        q = new_joint(rng.dirichlet(np.ones(8) * 0.5).reshape(2, 4), normalize=True)
        gamma = float(marginal_x(q).min()) + 0.05
        merged, _ = merge_rare_symbols(q, gamma)
        assert shrunk_margin(merged, 500, 0.1, "X") >= shrunk_margin(q, 500, 0.1, "X")


class TestLift:
    @pytest.mark.parametrize("gen", [chi2_generator(), tv_generator()])
    def test_merge_then_channel_equality(self, gen):
        rng = rng_for(5)
        q = rare_joint()
        merged, mmap = merge_rare_symbols(q, 0.2)
        w0 = random_mechanism(rng, len(merged.x_alphabet), 3)
        w0 = new_mechanism(w0.rows, merged.x_alphabet)
        lifted = lift_mechanism(mmap, w0, q.x_alphabet)
        px = marginal_x(q)
        raw_xy = px[:, None] * lifted.rows
        merged_xy = marginal_x(merged)[:, None] * w0.rows
        assert abs(f_information(raw_xy, gen) - f_information(merged_xy, gen)) <= 1e-12


class TestMergeMonotone:
    def test_no_merge_equal(self):
        q = new_joint([[0.3, 0.2, 0.1], [0.1, 0.2, 0.1]])
        res = check_merge_monotone(parse_measure("f:chi2"), q, 0.0, 0.02, n_outputs=2, step=0.1)
        assert res.h_merged == res.h_raw and res.ok

    def test_rare_symbol(self):
        q = new_joint([[0.4, 0.15, 0.04], [0.1, 0.25, 0.06]])
        res = check_merge_monotone(parse_measure("f:chi2"), q, 0.11, 0.03, n_outputs=3, step=0.1)
        assert res.ok

    def test_infeasible(self):
        q = new_joint([[0.4, 0.15, 0.04], [0.1, 0.25, 0.06]])
        with pytest.raises(Infeasible):
            check_merge_monotone(parse_measure("f:chi2"), q, 0.11, -1.0, n_outputs=2, step=0.1)
