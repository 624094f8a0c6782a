"""Brute-force oracles and diagnostics for the curvature approximations.

Dense finite-difference Hessians of the divergence, explicit-matrix power
iteration, cosine statistics for the virtual adversarial direction, the
normalised gradient SD norm, and LDS heat maps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .divergences import kl_rows, softmax
from .model import ClassifierSpec, ParamSet, logits
from .perturbation import PerturbConfig, virtual_adversarial_perturbation

MAX_HESSIAN_DIM = 64


class EigenConvergenceError(RuntimeError):
    pass


@dataclass
class HessianReport:
    H: np.ndarray
    lambda1: float
    lambda2: float
    u1: np.ndarray

    @property
    def eig_ratio(self) -> float:
        if self.lambda2 == 0:
            return math.inf
        return self.lambda1 / self.lambda2


@dataclass
class SdNormReport:
    K: int
    num_samples: int
    normalized_sd_norm: float
    degenerate: bool = False


def divergence_at(spec: ClassifierSpec, params: ParamSet, x: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """``D(r)`` for a single input ``x``, vectorised over rows of ``r``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    clean = softmax(logits(spec, params, x[None, :]))

    def D(r):
        r = np.atleast_2d(r)
        z = logits(spec, params, x[None, :] + r).data
        return kl_rows(np.broadcast_to(clean, z.shape), z)

    return D


def power_iteration(
    H: np.ndarray, max_iter: int = 10_000, tol: float = 1e-10, seed: int = 0
) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric matrix by explicit power iteration.

    Converged when the residual ``||Hu - lambda u||`` falls below
    ``tol * ||H||_F``.
    """
    n = H.shape[0]
    scale = np.linalg.norm(H)
    u = np.random.default_rng(seed).standard_normal(n)
    u /= np.linalg.norm(u)
    if scale == 0:
        return 0.0, u
    for _ in range(max_iter):
        v = H @ u
        lam = float(u @ v)
        if np.linalg.norm(v - lam * u) <= tol * scale:
            return lam, u
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0, u
        u = v / nv
    raise EigenConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def dense_hessian(
    spec: ClassifierSpec, params: ParamSet, x, h: float = 1e-4, max_dim: int = MAX_HESSIAN_DIM
) -> HessianReport:
    """Hessian of ``D(r)`` at ``r = 0`` from central second differences.

    ``H_ij = [D(h e_i + h e_j) - D(h e_i - h e_j) - D(-h e_i + h e_j) + D(-h e_i - h e_j)] / 4h^2``,
    then symmetrised; dominant eigenpairs by power iteration with deflation.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n > max_dim:
        raise ValueError(f"input dimension {n} exceeds the dense-Hessian guard of {max_dim}")
    D = divergence_at(spec, params, x)
    eye = h * np.eye(n)
    ei = np.repeat(eye, n, axis=0)
    ej = np.tile(eye, (n, 1))
    H = (D(ei + ej) - D(ei - ej) - D(-ei + ej) + D(-ei - ej)).reshape(n, n) / (4 * h * h)
    H = 0.5 * (H + H.T)
    lam1, u1 = power_iteration(H)
    lam2, _ = power_iteration(H - lam1 * np.outer(u1, u1), seed=1)
    return HessianReport(H, lam1, lam2, u1)


def expected_abs_cos_random(dim: int) -> float:
    """E|cos| between a uniform random unit vector and a fixed one in ``dim`` dimensions."""
    return math.exp(math.lgamma(dim / 2) - math.lgamma((dim + 1) / 2)) / math.sqrt(math.pi)


def compare_vadv_to_oracle(
    spec: ClassifierSpec,
    params: ParamSet,
    x,
    cfg: PerturbConfig,
    trials: int,
    rng: ad.Rng,
    report: HessianReport | None = None,
) -> dict:
    """|cos| between ``trials`` virtual adversarial directions and the oracle ``u1``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    report = report or dense_hessian(spec, params, x)
    out = {
        "K": cfg.power_iterations,
        "trials": trials,
        "lambda1": report.lambda1,
        "lambda2": report.lambda2,
        "eig_ratio": report.eig_ratio,
    }
    if report.lambda1 <= 1e-12:
        out.update(degenerate=True, mean_abs_cos=None, min_abs_cos=None, max_abs_cos=None)
        return out
    xs = np.repeat(x[None, :], trials, axis=0)
    pert = virtual_adversarial_perturbation(spec, params, xs, cfg, rng)
    d = pert.r / np.linalg.norm(pert.r, axis=1, keepdims=True)
    cos = np.abs(d @ report.u1)
    out.update(
        degenerate=False,
        mean_abs_cos=float(cos.mean()),
        min_abs_cos=float(cos.min()),
        max_abs_cos=float(cos.max()),
    )
    return out


def regularizer_gradient(
    spec: ClassifierSpec, params: ParamSet, x: np.ndarray, cfg: PerturbConfig, rng: ad.Rng
) -> tuple[np.ndarray, float]:
    """Gradient (stop-gradient rule) and value of the minibatch smoothness term."""
    from .objective import regularizer_batch

    tape = ad.Tape()
    leaves = params.leaves(tape)
    value, _, _ = regularizer_batch(spec, leaves, x, cfg, rng)
    names = list(leaves)
    gs = ad.backward(value, [leaves[k] for k in names])
    return params.flatten(dict(zip(names, gs))), value.item()


def normalized_sd_norm(
    spec: ClassifierSpec,
    params: ParamSet,
    inputs: np.ndarray,
    cfg: PerturbConfig,
    M: int,
    num_samples: int,
    rng: ad.Rng,
) -> SdNormReport:
    """sqrt(trace Var[g]) / ||E[g]|| for the regulariser gradient ``g``.

    Each sample draws a fresh minibatch of ``M`` inputs and fresh perturbations;
    the variance is the unbiased per-coordinate estimate.
    """
    if num_samples < 2:
        raise ValueError("num_samples must be at least 2")
    inputs = np.asarray(inputs, dtype=np.float64)
    grads = []
    for s in range(num_samples):
        srng = rng.substream(s)
        idx = srng.permutation(len(inputs))[:M]
        g, _ = regularizer_gradient(spec, params, inputs[idx], cfg, srng.substream("perturb"))
        grads.append(g)
    value, degenerate = sd_norm_from_gradients(np.array(grads))
    return SdNormReport(cfg.power_iterations, num_samples, value, degenerate)


def sd_norm_from_gradients(grads: np.ndarray) -> tuple[float, bool]:
    """``(sqrt(sum of unbiased per-coordinate variances) / ||mean||, degenerate)`` over rows."""
    grads = np.asarray(grads, dtype=np.float64)
    mean_norm = np.linalg.norm(grads.mean(axis=0))
    spread = math.sqrt(float(grads.var(axis=0, ddof=1).sum()))
    if mean_norm <= 1e-300:
        return math.inf, True
    return spread / mean_norm, False


def lds_per_example(
    spec: ClassifierSpec, params: ParamSet, x: np.ndarray, cfg: PerturbConfig, rng: ad.Rng
) -> np.ndarray:
    """LDS of every row of ``x``, each with its own virtual adversarial perturbation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    clean = softmax(logits(spec, params, x))
    pert = virtual_adversarial_perturbation(spec, params, x, cfg, rng, clean)
    return kl_rows(clean, logits(spec, params, x + pert.r).data)


@dataclass
class Grid:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    resolution: tuple[int, int]

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs = np.linspace(*self.x_range, self.resolution[0])
        ys = np.linspace(*self.y_range, self.resolution[1])
        gx, gy = np.meshgrid(xs, ys)
        return xs, ys, np.column_stack([gx.ravel(), gy.ravel()])


def lds_heatmap(
    spec: ClassifierSpec, params: ParamSet, grid: Grid, cfg: PerturbConfig, rng: ad.Rng
) -> np.ndarray:
    """LDS on a 2-D grid; rows follow y, columns follow x."""
    if spec.input_dim != 2:
        raise ValueError("heat maps need a model with 2-D inputs")
    xs, ys, pts = grid.points()
    return lds_per_example(spec, params, pts, cfg, rng).reshape(len(ys), len(xs))


def write_heatmap_csv(path, grid: Grid, values: np.ndarray) -> None:
    """Row-major ``x,y,lds`` table."""
    xs, ys, pts = grid.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "lds"])
        for (px, py), v in zip(pts, values.ravel()):
            w.writerow([repr(float(px)), repr(float(py)), repr(float(v))])


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_gradient(
    f_tape: Callable[[ad.Tensor], ad.Tensor], x: np.ndarray, step: float = 1e-5
) -> float:
    """Relative error between the tape gradient and central differences of ``f_tape``."""
    tape = ad.Tape()
    leaf = tape.leaf(x)
    (g,) = ad.backward(f_tape(leaf), [leaf])
    num = numerical_gradient(lambda v: float(f_tape(ad.Tensor(np.asarray(v))).data), x, step)
    return relative_error(g, num)
