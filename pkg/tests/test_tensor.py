import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spikepgd.tensor import SeededRandom, batch_relative_change, frobenius_norm, relative_change, uniform

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_frobenius_examples():
    assert frobenius_norm(np.zeros((2, 2))) == 0.0
    assert frobenius_norm([3.0, 4.0]) == 5.0
    assert frobenius_norm(np.eye(2)) == pytest.approx(1.41421356237309505, abs=1e-15)


def test_relative_change_examples():
    a = np.arange(6.0).reshape(2, 3) + 1
    assert relative_change(a, a) == 0.0
    assert relative_change([3.0, 4.0], [0.0, 0.0]) == 1.0
    assert relative_change([0.0, 0.0], [1.0, 0.0]) == math.inf
    assert relative_change([0.0, 0.0], [0.0, 0.0]) == 0.0


def test_relative_change_shape_mismatch():
    with pytest.raises(ValueError):
        relative_change(np.zeros(3), np.zeros(4))


def test_batch_relative_change_matches_scalar():
    rng = SeededRandom(3)
    a, b = rng.normal((5, 2, 3)), rng.normal((5, 2, 3))
    a[2] = 0.0
    got = batch_relative_change(a, b)
    want = [relative_change(a[i], b[i]) for i in range(5)]
    assert np.array_equal(got, want)


@given(arrays(np.float64, (3, 4), elements=finite), st.floats(1e-3, 1e3))
def test_relative_change_self_and_scale(a, c):
    if frobenius_norm(a) == 0:
        return
    assert relative_change(a, a) == 0.0
    b = a + 1.0
    assert relative_change(c * a, c * b) == pytest.approx(relative_change(a, b), rel=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32))
def test_triangle_inequality(seed):
    rng = SeededRandom(seed)
    a, b = rng.normal((4, 5)), rng.normal((4, 5))
    assert frobenius_norm(a + b) <= frobenius_norm(a) + frobenius_norm(b) + 1e-12


def test_uniform_examples():
    assert np.array_equal(uniform(SeededRandom(5), 0.0, 0.0, (2, 3)), np.zeros((2, 3)))
    a = uniform(SeededRandom(5), -1.0, 2.0, (100,))
    b = uniform(SeededRandom(5), -1.0, 2.0, (100,))
    assert np.array_equal(a, b)
    eps = 8 / 255
    u = uniform(SeededRandom(9), -eps, eps, (10000,))
    assert np.abs(u).max() < eps
    assert u.min() >= -eps


def test_uniform_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        uniform(SeededRandom(0), 1.0, 0.0, (2,))


def test_fork_is_deterministic_and_distinct():
    r = SeededRandom(11)
    assert np.array_equal(r.fork(1, 2).normal(5), SeededRandom(11).fork(1, 2).normal(5))
    assert not np.array_equal(r.fork(1).normal(5), r.fork(2).normal(5))


def test_seed_range():
    with pytest.raises(ValueError):
        SeededRandom(-1)
    SeededRandom(2**64 - 1)
