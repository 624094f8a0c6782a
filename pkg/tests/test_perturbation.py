import inspect

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vatlab import autodiff as ad
from vatlab.model import ClassifierSpec, ParamSet
from vatlab.oracle import compare_vadv_to_oracle, dense_hessian, expected_abs_cos_random
from vatlab.perturbation import (
    PerturbConfig,
    adversarial_perturbation,
    hvp_finite_difference,
    power_iteration_directions,
    random_sphere_perturbation,
    scale_to_norm,
    virtual_adversarial_perturbation,
)

from conftest import small_mlp, smooth_point


def diag_model():
    """Three-class linear model whose divergence Hessian at x = 0 is diag(4, 2)."""
    spec = ClassifierSpec(2, (), 3)
    p = ParamSet.for_spec(spec)
    p.arrays()["W0"][:] = [np.sqrt(6) * np.array([1.0, -1.0, 0.0]), [1.0, 1.0, -2.0]]
    return spec, p


def counted(fn):
    before = ad.backprop_count()
    out = fn()
    return out, ad.backprop_count() - before


def test_scale_to_norm_closed_forms():
    r, _ = scale_to_norm(np.array([3.0, 4.0]), 0.5, "l2")
    assert np.allclose(r, [[0.3, 0.4]], atol=1e-15)
    r, _ = scale_to_norm(np.array([0.3, -0.2]), 0.1, "linf")
    assert np.array_equal(r, [[0.1, -0.1]])
    for norm in ("l2", "linf"):
        r, _ = scale_to_norm(np.array([0.3, -0.2]), 0.0, norm)
        assert not np.any(r)
    r, zero = scale_to_norm(np.zeros((1, 3)), 1.0)
    assert zero[0] and not np.any(r)


def test_config_validation():
    with pytest.raises(ValueError):
        PerturbConfig(epsilon=-1)
    with pytest.raises(ValueError):
        PerturbConfig(xi=0)
    with pytest.raises(ValueError):
        PerturbConfig(power_iterations=-1)
    with pytest.raises(ValueError):
        PerturbConfig(norm="l1")


def test_adversarial_perturbation(mlp):
    spec, p = mlp
    x = ad.Rng(0).normal((6, spec.input_dim))
    y = np.arange(6) % spec.num_classes
    pert, n = counted(lambda: adversarial_perturbation(spec, p, x, y, PerturbConfig(0.3, norm="l2")))
    assert n == 1 and pert.kind == "adversarial"
    assert np.allclose(np.linalg.norm(pert.r, axis=1), 0.3, rtol=1e-12)
    linf = adversarial_perturbation(spec, p, x, y, PerturbConfig(0.3, norm="linf"))
    assert set(np.unique(linf.r)) <= {-0.3, 0.0, 0.3}
    # the perturbation must increase the loss to first order
    from vatlab.divergences import nll_onehot
    from vatlab.model import logits

    for i in range(6):
        before = nll_onehot(y[i:i + 1], logits(spec, p, x[i:i + 1]).data)
        after = nll_onehot(y[i:i + 1], logits(spec, p, x[i:i + 1] + 0.01 * pert.r[i]).data)
        assert after > before


def test_adversarial_zero_gradient_is_flagged():
    spec = ClassifierSpec(3, (4,), 2)
    pert = adversarial_perturbation(spec, ParamSet.for_spec(spec), np.ones((2, 3)), [0, 1], PerturbConfig(1.0))
    assert pert.degenerate.all() and not np.any(pert.r)


def test_hvp_rank1_closed_form(rank1):
    spec, p = rank1
    hd, n = counted(lambda: hvp_finite_difference(spec, p, np.zeros(2), np.array([1.0, 0.0])))
    assert n == 1
    assert np.allclose(hd, [[0.25, 0.0]], atol=1e-4)
    null = hvp_finite_difference(spec, p, np.zeros(2), np.array([0.0, 1.0]))
    assert np.max(np.abs(null)) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_hvp_matches_dense_hessian(seed):
    spec, p = small_mlp(seed)
    x = smooth_point(spec, p, ad.Rng(seed).substream("x"))
    hess = dense_hessian(spec, p, x)
    d = ad.gaussian_unit_vector(ad.Rng(seed).substream("d"), spec.input_dim)
    hd = hvp_finite_difference(spec, p, x, d)[0]
    ref = hess.H @ d
    assert hd @ ref / (np.linalg.norm(hd) * np.linalg.norm(ref)) >= 0.999


@pytest.mark.invariant
@pytest.mark.parametrize("seed", range(5))
def test_hvp_is_linear_in_direction(seed):
    spec, p = small_mlp(seed)
    rng = ad.Rng(seed).substream("lin")
    x = smooth_point(spec, p, rng)
    d1, d2 = rng.normal(spec.input_dim), rng.normal(spec.input_dim)
    a, b = 0.7, -1.3
    lhs = hvp_finite_difference(spec, p, x, a * d1 + b * d2)[0]
    rhs = a * hvp_finite_difference(spec, p, x, d1)[0] + b * hvp_finite_difference(spec, p, x, d2)[0]
    assert np.linalg.norm(lhs - rhs) <= 1e-3 * np.linalg.norm(rhs)


def test_vadv_rank1_lands_on_range(rank1):
    spec, p = rank1
    x = np.zeros((50, 2))
    pert, n = counted(lambda: virtual_adversarial_perturbation(spec, p, x, PerturbConfig(0.7), ad.Rng(1)))
    assert n == 1 and pert.kind == "virtual_adversarial" and pert.k_used == 1
    assert np.allclose(np.abs(pert.r[:, 0]), 0.7, rtol=1e-9)
    assert np.max(np.abs(pert.r[:, 1])) < 1e-6


def test_one_power_step_on_diagonal_hessian():
    spec, p = diag_model()
    hess = dense_hessian(spec, p, np.zeros(2))
    assert np.allclose(hess.H, np.diag([4.0, 2.0]), atol=1e-6)
    d0 = np.array([[1.0, 1.0]]) / np.sqrt(2)
    d, degenerate = power_iteration_directions(spec, p, np.zeros((1, 2)), d0, 1)
    assert np.allclose(d, [[2 / np.sqrt(5), 1 / np.sqrt(5)]], atol=1e-6)
    explicit = hess.H @ d0[0]
    assert np.allclose(d[0], explicit / np.linalg.norm(explicit), atol=1e-6)
    assert not degenerate.any()


@pytest.mark.parametrize("K", [1, 2, 3, 5])
def test_vadv_consumes_exactly_k_backprops(mlp, K):
    spec, p = mlp
    x = ad.Rng(2).normal((7, spec.input_dim))
    _, n = counted(lambda: virtual_adversarial_perturbation(spec, p, x, PerturbConfig(1.0, power_iterations=K), ad.Rng(0)))
    assert n == K


def test_vadv_never_takes_labels():
    params = inspect.signature(virtual_adversarial_perturbation).parameters
    assert not any("label" in name or name == "y" for name in params)


def test_vadv_requires_l2(mlp):
    spec, p = mlp
    with pytest.raises(ValueError):
        virtual_adversarial_perturbation(spec, p, np.zeros((1, 4)), PerturbConfig(norm="linf"), ad.Rng(0))


def test_flat_model_is_degenerate():
    spec = ClassifierSpec(3, (4,), 2)
    pert = virtual_adversarial_perturbation(
        spec, ParamSet.for_spec(spec), np.ones((5, 3)), PerturbConfig(0.5, power_iterations=2), ad.Rng(0)
    )
    assert pert.degenerate.all()
    assert np.allclose(np.linalg.norm(pert.r, axis=1), 0.5, rtol=1e-12)


@pytest.mark.invariant
@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(1e-3, 10.0), K=st.integers(0, 3))
def test_vadv_norm_is_exact(seed, eps, K):
    spec, p = small_mlp(seed % 7)
    x = ad.Rng(seed).normal((3, spec.input_dim))
    pert = virtual_adversarial_perturbation(spec, p, x, PerturbConfig(eps, power_iterations=K), ad.Rng(seed))
    assert np.all(np.abs(np.linalg.norm(pert.r, axis=1) / eps - 1) <= 1e-9)


def test_random_sphere():
    r = random_sphere_perturbation(5, 0.3, ad.Rng(0), n=4).r
    assert np.allclose(np.linalg.norm(r, axis=1), 0.3, rtol=1e-12)
    assert not np.any(random_sphere_perturbation(5, 0.0, ad.Rng(0)).r)
    draws = random_sphere_perturbation(3, 2.0, ad.Rng(1), n=10_000).r
    assert np.all(np.abs(draws.mean(axis=0)) <= 0.05 * 2.0)


@pytest.mark.invariant
@pytest.mark.parametrize("seed", range(3))
def test_cosine_non_decreasing_in_k(seed):
    spec, p = small_mlp(seed, input_dim=6, hidden=(10,), classes=3)
    x = smooth_point(spec, p, ad.Rng(seed).substream("x"))
    hess = dense_hessian(spec, p, x)
    means = []
    for K in (0, 1, 2, 3, 5):
        stats = compare_vadv_to_oracle(
            spec, p, x, PerturbConfig(1.0, power_iterations=K), 100, ad.Rng(seed).substream("trials", K), hess
        )
        means.append(stats["mean_abs_cos"])
    assert all(b >= a - 1e-3 for a, b in zip(means, means[1:])), means
    assert abs(means[0] - expected_abs_cos_random(6)) < 0.1
