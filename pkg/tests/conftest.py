"""Shared strategies and fixtures."""

import numpy as np
import pytest
from hypothesis import strategies as st

from privrobust.prob import new_joint, new_mechanism

SIX = [[0.42, 0.18], [0.16, 0.24]]


@pytest.fixture
def six():
    return new_joint(SIX)


def random_joint(rng, s_size, x_size, floor=0.0):
    """Dirichlet joint; with ``floor`` > 0, rejection-sample until both marginals clear it."""
    while True:
        mass = rng.dirichlet(np.ones(s_size * x_size)).reshape(s_size, x_size)
        if mass.sum(1).min() >= floor and mass.sum(0).min() >= floor:
            return new_joint(mass, normalize=True)


def random_mechanism(rng, x_size, n_outputs):
    return new_mechanism(rng.dirichlet(np.ones(n_outputs), size=x_size))


@st.composite
def joints(draw, max_s=3, max_x=3, min_s=1, min_x=1):
    s = draw(st.integers(min_s, max_s))
    x = draw(st.integers(min_x, max_x))
    weights = draw(
        st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=s * x, max_size=s * x).filter(lambda v: sum(v) > 1e-3)
    )
    return new_joint(np.array(weights).reshape(s, x), normalize=True)


@st.composite
def joint_and_mechanism(draw, max_s=3, max_x=3, max_y=3):
    q = draw(joints(max_s, max_x))
    n_out = draw(st.integers(1, max_y))
    rows = []
    for _ in range(q.shape[1]):
        w = draw(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n_out, max_size=n_out).filter(lambda v: sum(v) > 1e-3))
        rows.append(np.array(w) / sum(w))
    return q, new_mechanism(np.array(rows), q.x_alphabet)
