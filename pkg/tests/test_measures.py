import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privrobust.errors import AlphabetMismatch, InvalidParam
from privrobust.measures import (
    INF,
    MeasureSpec,
    arimoto_mi,
    channel_capacity,
    chi2_generator,
    f_information,
    hellinger_generator,
    leakage,
    max_alpha_leakage,
    parse_measure,
    pc_posterior,
    pc_prior,
    shannon_mi,
    sibson_mi,
    tv_generator,
    utility,
    FGenerator,
)
from privrobust.mechanisms import constant_channel
from privrobust.prob import new_joint, new_mechanism, push_forward, rng_for

from conftest import SIX, joints, random_joint, random_mechanism


# Loop-based reference implementations, written directly from the definitions.

def oracle_f_information(j, f):
    j = np.asarray(j, float)
    pu, pv = j.sum(1), j.sum(0)
    total = 0.0
    for u in range(j.shape[0]):
        for v in range(j.shape[1]):
            prod = pu[u] * pv[v]
            if prod > 0:
                total += prod * f(j[u, v] / prod)
    return total


def oracle_arimoto(j, a):
    j = np.asarray(j, float)
    pu = j.sum(1)
    num = sum(sum(j[u, v] ** a for u in range(j.shape[0])) ** (1 / a) for v in range(j.shape[1]))
    den = sum(p**a for p in pu) ** (1 / a)
    return a / (a - 1) * math.log(num / den)


def oracle_sibson(j, a):
    j = np.asarray(j, float)
    pu = j.sum(1)
    total = 0.0
    for v in range(j.shape[1]):
        inner = sum(pu[u] * (j[u, v] / pu[u]) ** a for u in range(j.shape[0]) if pu[u] > 0)
        total += inner ** (1 / a)
    return a / (a - 1) * math.log(total)


def oracle_shannon(j):
    j = np.asarray(j, float)
    pu, pv = j.sum(1), j.sum(0)
    return sum(
        j[u, v] * math.log(j[u, v] / (pu[u] * pv[v]))
        for u in range(j.shape[0])
        for v in range(j.shape[1])
        if j[u, v] > 0
    )


def product(rng, s, x):
    return np.outer(rng.dirichlet(np.ones(s)), rng.dirichlet(np.ones(x)))


class TestParse:
    @pytest.mark.parametrize(
        "text", ["pc", "f:tv", "f:chi2", "f:hellinger(2)", "arimoto(2)", "sibson(inf)", "maxal(3.5)", "shannon"]
    )
    def test_round_trip(self, text):
        assert str(parse_measure(text)) == text

    def test_order_one_is_shannon(self):
        assert parse_measure("arimoto(1)").kind == "shannon"

    @pytest.mark.parametrize("text", ["arimoto(0.5)", "sibson(1.0000001)", "bogus", "f:kl", "pc(2)"])
    def test_rejects(self, text):
        with pytest.raises(InvalidParam):
            parse_measure(text)

    def test_units(self):
        assert parse_measure("pc").units == "probability"
        assert parse_measure("arimoto(2)").units == "nats"
        assert parse_measure("f:tv").units == "divergence"


class TestPc:
    def test_prior(self):
        assert pc_prior([0.6, 0.4]) == 0.6
        assert pc_prior(np.full(4, 0.25)) == 0.25
        assert pc_prior([0, 1, 0]) == 1

    def test_posterior(self):
        assert pc_posterior(SIX) == pytest.approx(0.66, abs=1e-15)
        assert pc_posterior(np.eye(3) / 3) == pytest.approx(1.0)

    def test_independent(self):
        j = product(rng_for(0), 3, 4)
        assert pc_posterior(j) == pytest.approx(pc_prior(j.sum(1)), abs=1e-15)


class TestFInformation:
    @pytest.mark.parametrize("gen", [tv_generator(), chi2_generator(), hellinger_generator(2.0), hellinger_generator(1.5)])
    def test_oracle(self, gen):
        rng = rng_for(1)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(2, 3)
            assert f_information(j, gen) == pytest.approx(oracle_f_information(j, gen.f), abs=1e-13)

    def test_chi2_termwise(self):
        j = np.array(SIX)
        pp = np.outer(j.sum(1), j.sum(0))
        assert f_information(j, chi2_generator()) == pytest.approx(((j - pp) ** 2 / pp).sum(), abs=1e-15)

    def test_tv_identity(self):
        j = np.array(SIX)
        pp = np.outer(j.sum(1), j.sum(0))
        assert f_information(j, tv_generator()) == pytest.approx(0.5 * np.abs(j - pp).sum(), abs=1e-15)

    def test_product_zero(self):
        assert abs(f_information(product(rng_for(2), 2, 3), chi2_generator())) <= 1e-12

    def test_zero_marginal_terms_skipped(self):
        assert f_information([[0.5, 0.0], [0.5, 0.0]], chi2_generator()) == 0.0

    @pytest.mark.parametrize("gen", [tv_generator(), chi2_generator(), hellinger_generator(2.0)])
    def test_generator_contract(self, gen):
        assert gen.f(np.array(1.0)) == 0
        rng = rng_for(3)
        for _ in range(50):
            a, b = rng.uniform(0, 5, 2)
            lam = rng.uniform()
            mid = gen.f(np.array(lam * a + (1 - lam) * b))
            assert mid <= lam * gen.f(np.array(a)) + (1 - lam) * gen.f(np.array(b)) + 1e-12
        us = np.linspace(0.5, 20, 40)
        assert np.all(np.diff([gen.k(u) for u in us]) >= 0)
        assert np.all(np.diff([gen.lip(u) for u in us]) >= 0)

    def test_numeric_fallback_close(self):
        base = chi2_generator()
        custom = FGenerator("chi2-numeric", base.f)
        assert custom.k(3.0) == pytest.approx(base.k(3.0), rel=1e-6)
        assert custom.lip(3.0) == pytest.approx(base.lip(3.0), rel=1e-3)


class TestArimoto:
    def test_inf_closed_form(self):
        assert arimoto_mi(SIX, INF) == pytest.approx(math.log(1.1), abs=1e-15)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 7.0])
    def test_oracle(self, alpha):
        rng = rng_for(4)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(3, 2)
            assert arimoto_mi(j, alpha) == pytest.approx(oracle_arimoto(j, alpha), abs=1e-12)
        assert arimoto_mi(SIX, 2.0) == pytest.approx(oracle_arimoto(SIX, 2.0), abs=1e-14)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, INF])
    def test_independent(self, alpha):
        assert abs(arimoto_mi(product(rng_for(5), 3, 3), alpha)) <= 1e-12

    def test_large_order_limit(self):
        rng = rng_for(6)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(2, 3)
            assert abs(arimoto_mi(j, 1e4) - arimoto_mi(j, INF)) <= 1e-3
            assert abs(sibson_mi(j, 1e4) - sibson_mi(j, INF)) <= 1e-3

    def test_near_one_approaches_shannon(self):
        rng = rng_for(7)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(2, 3)
            assert abs(arimoto_mi(j, 1 + 1e-3) - shannon_mi(j)) <= 1e-2


class TestSibson:
    def test_inf(self):
        assert sibson_mi(SIX, INF) == pytest.approx(math.log(1.3), abs=1e-15)

    def test_inf_input_law_invariant(self):
        cond = np.array(SIX) / np.array(SIX).sum(1, keepdims=True)
        other = np.array([[0.1], [0.9]]) * cond
        assert sibson_mi(other, INF) == pytest.approx(math.log(1.3), abs=1e-15)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 5.0])
    def test_oracle(self, alpha):
        rng = rng_for(8)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(3, 2)
            assert sibson_mi(j, alpha) == pytest.approx(oracle_sibson(j, alpha), abs=1e-12)

    def test_zero_row_excluded(self):
        j = np.array([[0.3, 0.2], [0.0, 0.0], [0.1, 0.4]])
        assert sibson_mi(j, 2.0) == pytest.approx(sibson_mi(j[[0, 2]], 2.0), abs=1e-15)
        assert sibson_mi(j, INF) == pytest.approx(sibson_mi(j[[0, 2]], INF), abs=1e-15)

    def test_independent(self):
        assert abs(sibson_mi(product(rng_for(9), 2, 3), 2.0)) <= 1e-12


class TestShannon:
    def test_independent(self):
        assert abs(shannon_mi(product(rng_for(10), 3, 2))) <= 1e-12

    def test_uniform_copy(self):
        assert shannon_mi(np.eye(4) / 4) == pytest.approx(math.log(4), abs=1e-15)

    def test_oracle(self):
        rng = rng_for(11)
        for _ in range(20):
            j = rng.dirichlet(np.ones(6)).reshape(2, 3)
            assert shannon_mi(j) == pytest.approx(oracle_shannon(j), abs=1e-13)


@given(joints())
@settings(max_examples=60)
def test_nonnegative(q):
    j = q.mass
    for value in (
        f_information(j, chi2_generator()),
        f_information(j, tv_generator()),
        arimoto_mi(j, 2.0),
        arimoto_mi(j, INF),
        sibson_mi(j, 3.0),
        sibson_mi(j, INF),
        shannon_mi(j),
    ):
        assert value >= -1e-12


@given(st.integers(0, 10**6), st.sampled_from([1.5, 2.0, 3.0, INF]))
@settings(max_examples=40)
def test_product_joints_are_null(seed, alpha):
    rng = rng_for(seed)
    j = product(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    assert abs(arimoto_mi(j, alpha)) <= 1e-12
    assert abs(sibson_mi(j, alpha)) <= 1e-12
    assert abs(f_information(j, chi2_generator())) <= 1e-12
    assert abs(shannon_mi(j)) <= 1e-12
    assert pc_posterior(j) == pytest.approx(pc_prior(j.sum(1)), abs=1e-12)


class TestMaxLeakage:
    def test_constant_channel_zero(self, six):
        w = constant_channel(six.x_alphabet)
        for alpha in (1.5, 2.0, INF):
            assert max_alpha_leakage(six, w, alpha) == pytest.approx(0.0, abs=1e-12)

    def test_inf_equals_column_max_sum(self, six):
        w = new_mechanism([[0.9, 0.1], [0.2, 0.8]])
        sy, _ = push_forward(six, w)
        cond = sy.mass / sy.mass.sum(1, keepdims=True)
        expected = math.log(cond.max(0).sum())
        assert max_alpha_leakage(six, w, INF) == pytest.approx(expected, abs=1e-14)
        assert max_alpha_leakage(six, w, INF, method="search") == pytest.approx(expected, abs=1e-12)

    def test_binary_grid_oracle(self, six):
        w = new_mechanism([[0.9, 0.1], [0.2, 0.8]])
        sy, _ = push_forward(six, w)
        cond = sy.mass / sy.mass.sum(1, keepdims=True)
        grid = np.linspace(0, 1, 1001)
        best = max(sibson_mi(np.array([[p], [1 - p]]) * cond, 2.0) for p in grid)
        assert max_alpha_leakage(six, w, 2.0) == pytest.approx(best, abs=1e-4)
        assert max_alpha_leakage(six, w, 2.0) >= best - 1e-12

    def test_three_input_grid_oracle(self):
        rng = rng_for(12)
        for _ in range(5):
            k = rng.dirichlet(np.ones(4), size=3)
            best = -INF
            for a, b in itertools.product(np.linspace(0, 1, 101), repeat=2):
                if a + b <= 1 + 1e-12:
                    law = np.array([a, b, max(0.0, 1 - a - b)])
                    best = max(best, sibson_mi(law[:, None] * k, 2.5))
            res = channel_capacity(k, 2.5)
            assert res.value >= best - 1e-9
            assert res.value <= best + 1e-3
            assert res.gap <= 1e-8

    def test_support_restriction(self):
        q = new_joint([[0.5, 0.5], [0.0, 0.0], [0.0, 0.0]])
        w = new_mechanism([[0.9, 0.1], [0.2, 0.8]])
        assert max_alpha_leakage(q, w, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_search_only_at_inf(self, six):
        with pytest.raises(InvalidParam):
            max_alpha_leakage(six, constant_channel(six.x_alphabet), 2.0, method="search")

    def test_large_order_stays_finite(self):
        k = rng_for(13).dirichlet(np.ones(3), size=3)
        value = channel_capacity(k, 500.0).value
        assert math.isfinite(value)
        assert value == pytest.approx(channel_capacity(k, INF).value, abs=5e-3)


class TestDispatch:
    def test_identity_pc(self, six):
        assert leakage(parse_measure("pc"), six, new_mechanism(np.eye(2))) == pytest.approx(0.66)

    def test_constant_pc(self, six):
        assert leakage(parse_measure("pc"), six, constant_channel(six.x_alphabet)) == pytest.approx(0.6)

    def test_maxal_utility_ignores_law(self):
        rng = rng_for(14)
        w = random_mechanism(rng, 3, 3)
        spec = parse_measure("maxal(2)")
        values = {round(utility(spec, random_joint(rng, 2, 3), w), 14) for _ in range(5)}
        assert len(values) == 1

    def test_alphabet_mismatch(self, six):
        w = new_mechanism(np.eye(2), ["a", "b"])
        for text in ("pc", "maxal(2)"):
            with pytest.raises(AlphabetMismatch):
                utility(parse_measure(text), six, w)

    def test_spec_validation(self):
        with pytest.raises(InvalidParam):
            MeasureSpec("arimoto")
        with pytest.raises(InvalidParam):
            MeasureSpec("pc", alpha=2.0)
