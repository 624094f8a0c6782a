"""Adversarial, virtual adversarial and random input perturbations.

All functions operate on a batch ``x`` of shape ``(batch, input_dim)`` and
return one perturbation row per example. Examples never interact, so one
reverse sweep over the summed divergence yields every per-example gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import autodiff as ad
from .divergences import kl, nll_onehot, softmax
from .model import ClassifierSpec, ParamSet, logits

Norm = Literal["l2", "linf"]
XI_DEFAULT = 1e-6


@dataclass(frozen=True)
class PerturbConfig:
    epsilon: float = 2.0
    xi: float = XI_DEFAULT
    power_iterations: int = 1
    norm: Norm = "l2"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.power_iterations < 0:
            raise ValueError("power_iterations must be >= 0")
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"unknown norm {self.norm!r}")


@dataclass
class Perturbation:
    r: np.ndarray
    kind: Literal["adversarial", "virtual_adversarial", "random"]
    k_used: int = 0
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.r), dtype=bool)


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def scale_to_norm(g: np.ndarray, epsilon: float, norm: Norm = "l2") -> tuple[np.ndarray, np.ndarray]:
    """Map each row of ``g`` onto the epsilon-ball boundary.

    Returns ``(r, degenerate)``; rows with ``g == 0`` map to zero and are
    flagged.
    """
    g = _rows(g)
    if norm == "linf":
        zero = ~np.any(g != 0, axis=1)
        return epsilon * np.sign(g), zero
    n = np.linalg.norm(g, axis=1, keepdims=True)
    zero = n[:, 0] == 0
    safe = np.where(n == 0, 1.0, n)
    return epsilon * g / safe, zero


def _unit_rows(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(g, axis=1, keepdims=True)
    zero = n[:, 0] == 0
    return g / np.where(n == 0, 1.0, n), zero


def adversarial_perturbation(
    spec: ClassifierSpec, params: ParamSet, x, labels, cfg: PerturbConfig, noise=None
) -> Perturbation:
    """Linearised worst-case perturbation against the one-hot label target."""
    x = _rows(x)
    tape = ad.Tape()
    xt = tape.leaf(x, name="x")
    z = logits(spec, params, xt, training=noise is not None, noise=noise)
    loss = nll_onehot(labels, z) * float(len(x))
    (g,) = ad.backward(loss, [xt])
    r, degenerate = scale_to_norm(g, cfg.epsilon, cfg.norm)
    return Perturbation(r, "adversarial", 0, degenerate)


def hvp_finite_difference(
    spec: ClassifierSpec,
    params: ParamSet,
    x,
    d,
    xi: float = XI_DEFAULT,
    clean_probs: np.ndarray | None = None,
    noise=None,
) -> np.ndarray:
    """Finite-difference Hessian-vector product of the divergence around ``r = 0``.

    Returns ``grad_r D(r)|_{r = xi d} / xi`` per row, where ``D(r)`` is the KL
    divergence from the clean prediction to the prediction at ``x + r``. The
    gradient at ``r = 0`` vanishes, so no second evaluation is needed. Uses
    exactly one reverse sweep.
    """
    x, d = _rows(x), _rows(d)
    training = noise is not None
    if clean_probs is None:
        clean_probs = softmax(logits(spec, params, x, training=training, noise=noise))
    tape = ad.Tape()
    r = tape.leaf(xi * d, name="r")
    z = logits(spec, params, ad.add(x, r), training=training, noise=noise)
    div = kl(clean_probs, z, reduction="sum")
    (g,) = ad.backward(div, [r])
    hd = g / xi
    if not np.all(np.isfinite(hd)):
        raise ad.NonFiniteError("finite-difference Hessian-vector product is not finite")
    return hd


def power_iteration_directions(
    spec, params, x, d0, iterations, xi=XI_DEFAULT, clean_probs=None, noise=None
) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``d <- normalize(H d)`` ``iterations`` times; returns ``(d, degenerate)``.

    A row whose product vanishes keeps its previous direction; it is flagged
    degenerate when that happened on every iteration.
    """
    d = _rows(d0).copy()
    degenerate = np.ones(len(d), dtype=bool) if iterations > 0 else np.zeros(len(d), dtype=bool)
    for _ in range(iterations):
        hd = hvp_finite_difference(spec, params, x, d, xi, clean_probs, noise)
        unit, zero = _unit_rows(hd)
        d = np.where(zero[:, None], d, unit)
        degenerate &= zero
    return d, degenerate


def virtual_adversarial_perturbation(
    spec: ClassifierSpec,
    params: ParamSet,
    x,
    cfg: PerturbConfig,
    rng: ad.Rng,
    clean_probs: np.ndarray | None = None,
    noise=None,
) -> Perturbation:
    """Label-free perturbation along the estimated dominant curvature direction.

    Starts from an isotropic random unit vector and runs ``cfg.power_iterations``
    finite-difference power steps (one reverse sweep each). Returns
    ``epsilon * d``. With zero iterations this is a random sphere sample.
    """
    if cfg.norm != "l2":
        raise ValueError("virtual adversarial perturbations use the L2 ball")
    x = _rows(x)
    d0 = ad.gaussian_unit_rows(rng, len(x), x.shape[1])
    if clean_probs is None:
        clean_probs = softmax(logits(spec, params, x, training=noise is not None, noise=noise))
    d, degenerate = power_iteration_directions(
        spec, params, x, d0, cfg.power_iterations, cfg.xi, clean_probs, noise
    )
    kind = "virtual_adversarial" if cfg.power_iterations > 0 else "random"
    return Perturbation(cfg.epsilon * d, kind, cfg.power_iterations, degenerate)


def random_sphere_perturbation(dim: int, epsilon: float, rng: ad.Rng, n: int = 1) -> Perturbation:
    """Uniform sample from the radius-``epsilon`` sphere (``n`` rows)."""
    d = ad.gaussian_unit_rows(rng, n, dim)
    return Perturbation(epsilon * d, "random", 0)
