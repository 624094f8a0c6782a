import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vatlab import autodiff as ad
from vatlab.divergences import (
    conditional_entropy,
    entropy_from_logits,
    kl,
    kl_rows,
    nll_onehot,
    softmax,
)
from vatlab.oracle import numerical_gradient, relative_error


def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0]), [[0.5, 0.5]])
    for c in (-50.0, 0.0, 7.0):
        assert np.allclose(softmax([c, c, c]), 1 / 3)
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] < 1e-300
    with pytest.raises(ad.NonFiniteError):
        softmax([np.inf, 0.0])


def test_kl_closed_forms():
    assert abs(kl([0.5, 0.5], np.log([0.25, 0.75])) - (0.5 * math.log(2) + 0.5 * math.log(2 / 3))) < 1e-12
    assert abs(kl([0.5, 0.5], np.log([0.25, 0.75])) - 0.143841) < 1e-6
    assert abs(kl([1.0, 0.0], [0.0, 0.0]) - math.log(2)) < 1e-12
    q = np.array([0.3, -1.2, 2.0])
    assert abs(kl(softmax(q), q)) < 1e-15


def test_kl_zero_mass_terms_contribute_nothing():
    # p has a zero where q is tiny: the term must vanish rather than produce nan
    assert np.isfinite(kl([1.0, 0.0], [0.0, -800.0]))


def test_kl_equals_cross_entropy_for_onehot():
    z = np.array([[0.2, -0.4, 1.0]])
    assert abs(kl([[0.0, 0.0, 1.0]], z) - nll_onehot([2], z)) < 1e-12


def test_kl_class_mismatch():
    with pytest.raises(ValueError):
        kl([0.5, 0.5], [0.0, 0.0, 0.0])


@pytest.mark.invariant
def test_kl_non_negative_over_ten_thousand_trials():
    rng = np.random.default_rng(0)
    for c in (2, 3, 10):
        p = softmax(rng.normal(scale=3, size=(10_000, c)))
        # knock out some entries so the 0 log 0 convention is exercised
        p[:, 0] *= rng.random(10_000) > 0.2
        p = p / p.sum(axis=1, keepdims=True)
        q = rng.normal(scale=3, size=(10_000, c))
        assert np.all(kl_rows(p, q) >= -1e-12)


@pytest.mark.invariant
@settings(max_examples=1000, deadline=None)
@given(
    q=arrays(np.float64, 4, elements=st.floats(-20, 20)),
    p_logits=arrays(np.float64, 4, elements=st.floats(-20, 20)),
    c=st.floats(-100, 100),
)
def test_kl_shift_invariance(q, p_logits, c):
    p = softmax(p_logits)
    assert abs(kl(p, q) - kl(p, q + c)) < 1e-9


@pytest.mark.invariant
@settings(max_examples=1000, deadline=None)
@given(q=arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_kl_gradient_vanishes_at_its_minimum(q):
    tape = ad.Tape()
    leaf = tape.leaf(q[None, :])
    (g,) = ad.backward(kl(softmax(q), leaf), [leaf])
    assert np.max(np.abs(g)) < 1e-9


@pytest.mark.invariant
@settings(max_examples=1000, deadline=None)
@given(z=arrays(np.float64, (3, 6), elements=st.floats(-30, 30)))
def test_entropy_bounded_by_log_classes(z):
    assert conditional_entropy(softmax(z)) <= math.log(6) + 1e-12


def test_entropy_max_only_at_uniform():
    assert abs(conditional_entropy(np.full((1, 10), 0.1)) - math.log(10)) < 1e-12
    assert conditional_entropy(softmax([[0.0, 1e-3, 0.0]])) < math.log(3)


def test_entropy_examples():
    assert conditional_entropy(np.eye(4)) == 0.0
    assert abs(conditional_entropy([0.5, 0.5]) - math.log(2)) < 1e-15


def test_entropy_from_logits_gradient():
    z = np.random.default_rng(1).normal(size=(3, 4))
    tape = ad.Tape()
    leaf = tape.leaf(z)
    val = entropy_from_logits(leaf)
    assert abs(val.item() - conditional_entropy(softmax(z))) < 1e-12
    (g,) = ad.backward(val, [leaf])
    num = numerical_gradient(lambda v: entropy_from_logits(ad.Tensor(v)).item(), z)
    assert relative_error(g, num) < 1e-6


def test_nll_examples():
    assert abs(nll_onehot([3], np.zeros((1, 10))) - math.log(10)) < 1e-12
    assert abs(nll_onehot([0], [[20.0, 0.0]]) - 2.06e-9) < 1e-11
    a, b = np.array([[1.0, -1.0]]), np.array([[-1.0, 1.0]])
    both = nll_onehot([0, 0], np.vstack([a, b]))
    assert abs(both - 0.5 * (nll_onehot([0], a) + nll_onehot([0], b))) < 1e-15


def test_nll_label_range():
    with pytest.raises(ValueError):
        nll_onehot([2], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        nll_onehot([-1], np.zeros((1, 2)))


def test_kl_treats_p_as_constant():
    tape = ad.Tape()
    p_leaf = tape.leaf(np.array([[0.2, 0.8]]))
    q = tape.leaf(np.array([[0.1, 0.3]]))
    gp, gq = ad.backward(kl(p_leaf, q), [p_leaf, q])
    assert np.array_equal(gp, np.zeros((1, 2)))
    assert np.allclose(gq, softmax([0.1, 0.3]) - [0.2, 0.8])
