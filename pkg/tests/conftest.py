import numpy as np
import pytest

from vatlab.autodiff import Rng
from vatlab.model import ClassifierSpec, ParamSet, init_params


def rank1_model():
    """Binary linear softmax model with w = (1, 0) on class 0 and zero bias.

    The divergence Hessian at x = 0 is 0.25 * w w^T.
    """
    spec = ClassifierSpec(2, (), 2)
    params = ParamSet.for_spec(spec)
    params.arrays()["W0"][0, 0] = 1.0
    return spec, params


def small_mlp(seed=0, input_dim=4, hidden=(5,), classes=3):
    spec = ClassifierSpec(input_dim, hidden, classes)
    return spec, init_params(spec, Rng(seed).substream("init"))


def smooth_point(spec, params, rng, margin=0.05, tries=200):
    """An input whose hidden pre-activations all sit at least ``margin`` from the kink."""
    for _ in range(tries):
        x = rng.normal(spec.input_dim)
        h, ok = x[None, :], True
        arrays = params.arrays()
        for k in range(len(spec.hidden_dims)):
            pre = h @ arrays[f"W{k}"] + arrays[f"b{k}"]
            if np.min(np.abs(pre)) < margin:
                ok = False
                break
            h = np.maximum(pre, 0)
        if ok:
            return x
    raise RuntimeError("no smooth point found")


@pytest.fixture
def rank1():
    return rank1_model()


@pytest.fixture
def mlp():
    return small_mlp()


def objective_gradient_error(method, spec, seed=0, eps=0.5, noise=False):
    """Relative error of the stop-gradient objective gradient against central differences.

    The finite differences move only the parameters; the perturbation, the
    clean prediction and any noise draws stay frozen at their sampled values.
    """
    from vatlab.objective import TrainConfig, evaluate_frozen, full_objective
    from vatlab.oracle import numerical_gradient, relative_error
    from vatlab.perturbation import PerturbConfig

    params = init_params(spec, Rng(seed).substream("init"))
    params = params.with_theta(params.theta + 0.1 * Rng(seed).substream("bias").normal(len(params)))
    r = Rng(seed).substream("data")
    xl = r.normal((5, spec.input_dim))
    yl = r.integers(0, spec.num_classes, 5)
    xm = r.normal((7, spec.input_dim))
    cfg = TrainConfig(method=method, perturb=PerturbConfig(eps, 1e-6, 1), beta=0.7, alpha=1.3)
    terms = full_objective(spec, params, (xl, yl), xm, cfg, Rng(seed).substream("step"), training=noise)

    def value(theta):
        return evaluate_frozen(spec, params.with_theta(theta), terms.frozen, cfg, with_grad=False)[0]["total"]

    assert abs(value(params.theta) - terms.total) < 1e-12
    return relative_error(terms.grad, numerical_gradient(value, params.theta, 1e-5))


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    results = request.config.stash.setdefault(_CRITERIA, {})

    def record(number, passed, detail=""):
        results[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
