"""Training objective, stop-gradient handling, ADAM and the training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Literal, Mapping

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .divergences import entropy_from_logits, kl, nll_onehot, softmax
from .model import ClassifierSpec, ParamSet, init_params, logits, sample_noise
from .perturbation import (
    PerturbConfig,
    Perturbation,
    adversarial_perturbation,
    virtual_adversarial_perturbation,
)

log = logging.getLogger(__name__)

Method = Literal["baseline", "vat", "rpt", "adversarial_l2", "adversarial_linf", "vat_entmin"]
METHODS = ("baseline", "vat", "rpt", "adversarial_l2", "adversarial_linf", "vat_entmin")
SMOOTHING = ("vat", "rpt", "vat_entmin")


@dataclass(frozen=True)
class TrainConfig:
    method: Method = "vat"
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    alpha: float = 1.0
    beta: float = 1.0
    batch_labeled: int = 64
    batch_unlabeled: int = 256
    updates: int = 1000
    lr: float = 0.002
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_schedule: Literal["constant", "exp_decay", "linear_decay"] = "constant"
    lr_decay_rate: float = 0.9
    lr_decay_every: int = 600
    lr_decay_start: int = 0
    record_every: int = 1
    eval_every: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.method == "rpt" and self.perturb.power_iterations != 0:
            object.__setattr__(self, "perturb", replace(self.perturb, power_iterations=0))
        if self.method in ("vat", "vat_entmin") and self.perturb.power_iterations < 1:
            raise ValueError(f"method {self.method} needs at least one power iteration")
        norm = "linf" if self.method == "adversarial_linf" else "l2"
        if self.perturb.norm != norm:
            object.__setattr__(self, "perturb", replace(self.perturb, norm=norm))
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ValueError("batch sizes must be positive")

    @property
    def expected_backprops(self) -> int:
        if self.method in SMOOTHING:
            return self.perturb.power_iterations + 2
        if self.method.startswith("adversarial"):
            return 2
        return 1

    def learning_rate(self, update: int) -> float:
        if self.lr_schedule == "exp_decay":
            return self.lr * self.lr_decay_rate ** (update // self.lr_decay_every)
        if self.lr_schedule == "linear_decay" and update >= self.lr_decay_start:
            span = max(self.updates - self.lr_decay_start, 1)
            return self.lr * max(self.updates - update, 0) / span
        return self.lr


@dataclass
class RunRecord:
    update: int
    nll: float
    r_vadv: float
    r_cent: float
    total: float
    backprops_this_update: int
    wallclock: float
    lr: float
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class FrozenInputs:
    """Everything the gradient treats as constant within one update."""

    x_labeled: np.ndarray
    y_labeled: np.ndarray
    x_mixed: np.ndarray | None = None
    clean_probs: np.ndarray | None = None
    perturbation: Perturbation | None = None
    noise_labeled: list | None = None
    noise_clean: list | None = None
    noise_perturbed: list | None = None


@dataclass
class ObjectiveTerms:
    nll: float
    r_vadv: float
    r_cent: float
    total: float
    grad: np.ndarray | None
    backprops: int
    frozen: FrozenInputs


def lds(spec: ClassifierSpec, params, x, r, clean_probs: np.ndarray, noise=None):
    """Mean divergence from the (constant) clean prediction to the prediction at ``x + r``.

    Returns a tensor when ``params`` is a mapping of tape leaves, else a float.
    """
    r = r.r if isinstance(r, Perturbation) else r
    xr = np.asarray(x, dtype=np.float64) + r
    z = logits(spec, params, xr, training=noise is not None, noise=noise)
    out = kl(clean_probs, z)
    return out.item() if isinstance(params, ParamSet) else out


def regularizer_batch(
    spec: ClassifierSpec,
    params,
    x,
    cfg: PerturbConfig,
    rng: ad.Rng,
    noise_clean=None,
    noise_perturbed=None,
):
    """Mean local distributional smoothness over ``x``; never reads labels.

    ``params`` may be a :class:`ParamSet` (numeric result) or a mapping of
    tape leaves (differentiable result). The perturbation is computed at the
    current parameter values and held fixed. Returns ``(value, perturbation,
    clean_probs)``.
    """
    base = params if isinstance(params, ParamSet) else {k: v.data for k, v in params.items()}
    x = np.asarray(x, dtype=np.float64)
    clean_probs = softmax(logits(spec, base, x, training=noise_clean is not None, noise=noise_clean))
    pert = virtual_adversarial_perturbation(spec, base, x, cfg, rng, clean_probs, noise_clean)
    value = lds(spec, params, x, pert, clean_probs, noise_perturbed)
    return value, pert, clean_probs


def prepare_frozen(
    spec: ClassifierSpec,
    params: ParamSet,
    x_labeled,
    y_labeled,
    x_mixed,
    cfg: TrainConfig,
    rng: ad.Rng,
    training: bool = True,
) -> FrozenInputs:
    """Draw noise and compute the perturbation (K or one reverse sweeps)."""
    noisy = training and spec.hidden_noise_sd > 0
    nrng = rng.substream("noise")
    x_labeled = np.asarray(x_labeled, dtype=np.float64)
    fz = FrozenInputs(x_labeled, np.asarray(y_labeled))
    if noisy:
        fz.noise_labeled = sample_noise(spec, len(x_labeled), nrng.substream("labeled"))
    if cfg.method.startswith("adversarial"):
        if noisy:
            fz.noise_perturbed = sample_noise(spec, len(x_labeled), nrng.substream("perturbed"))
        fz.perturbation = adversarial_perturbation(
            spec, params, x_labeled, y_labeled, cfg.perturb, fz.noise_labeled
        )
    elif cfg.method in SMOOTHING:
        fz.x_mixed = np.asarray(x_mixed, dtype=np.float64)
        if noisy:
            fz.noise_clean = sample_noise(spec, len(fz.x_mixed), nrng.substream("clean"))
            fz.noise_perturbed = sample_noise(spec, len(fz.x_mixed), nrng.substream("perturbed"))
        fz.clean_probs = softmax(
            logits(spec, params, fz.x_mixed, training=noisy, noise=fz.noise_clean)
        )
        fz.perturbation = virtual_adversarial_perturbation(
            spec, params, fz.x_mixed, cfg.perturb, rng.substream("direction"),
            fz.clean_probs, fz.noise_clean,
        )
    return fz


def evaluate_frozen(
    spec: ClassifierSpec, params: ParamSet, fz: FrozenInputs, cfg: TrainConfig, with_grad: bool = True
) -> tuple[dict, np.ndarray | None]:
    """Objective value (and gradient) with the perturbation and clean prediction held fixed.

    The labeled likelihood and the smoothness regulariser live on separate
    minibatches and are swept separately.
    """
    grad = np.zeros_like(params.theta) if with_grad else None
    tape = ad.Tape()
    leaves = params.leaves(tape) if with_grad else params
    z = logits(spec, leaves, fz.x_labeled, training=fz.noise_labeled is not None, noise=fz.noise_labeled)
    nll = nll_onehot(fz.y_labeled, z)
    loss1 = nll
    reg = ent = 0.0
    if cfg.method.startswith("adversarial"):
        noise = fz.noise_perturbed
        z_adv = logits(spec, leaves, fz.x_labeled + fz.perturbation.r, training=noise is not None, noise=noise)
        reg = nll_onehot(fz.y_labeled, z_adv)
        loss1 = nll + cfg.alpha * reg
    if with_grad:
        names = list(leaves)
        gs = ad.backward(loss1, [leaves[k] for k in names])
        grad += params.flatten(dict(zip(names, gs)))

    if cfg.method in SMOOTHING:
        tape = ad.Tape()
        leaves = params.leaves(tape) if with_grad else params
        reg = lds(spec, leaves, fz.x_mixed, fz.perturbation, fz.clean_probs, fz.noise_perturbed)
        loss2 = reg * cfg.alpha
        if cfg.method == "vat_entmin":
            z_clean = logits(spec, leaves, fz.x_mixed, training=fz.noise_clean is not None, noise=fz.noise_clean)
            ent = entropy_from_logits(z_clean)
            loss2 = loss2 + ent * cfg.beta
        if with_grad:
            names = list(leaves)
            gs = ad.backward(loss2, [leaves[k] for k in names])
            grad += params.flatten(dict(zip(names, gs)))

    val = lambda t: float(t.item()) if isinstance(t, ad.Tensor) else float(t)  # noqa: E731
    nll, reg, ent = val(nll), val(reg), val(ent)
    total = nll + cfg.alpha * reg + (cfg.beta * ent if cfg.method == "vat_entmin" else 0.0)
    return {"nll": nll, "r_vadv": reg, "r_cent": ent, "total": total}, grad


def full_objective(
    spec: ClassifierSpec,
    params: ParamSet,
    labeled: tuple[np.ndarray, np.ndarray],
    x_mixed,
    cfg: TrainConfig,
    rng: ad.Rng,
    training: bool = True,
) -> ObjectiveTerms:
    """Likelihood plus weighted regulariser(s), with its stop-gradient gradient.

    The gradient ignores how the perturbation and the clean prediction depend
    on the parameters.
    """
    if len(labeled[0]) == 0:
        raise ValueError("labeled batch is empty")
    start = ad.backprop_count()
    fz = prepare_frozen(spec, params, labeled[0], labeled[1], x_mixed, cfg, rng, training)
    values, grad = evaluate_frozen(spec, params, fz, cfg)
    return ObjectiveTerms(
        values["nll"], values["r_vadv"], values["r_cent"], values["total"],
        grad, ad.backprop_count() - start, fz,
    )


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected ADAM update; ``state`` is advanced in place."""
    if not np.all(np.isfinite(grad)):
        raise ad.NonFiniteError("non-finite gradient passed to ADAM")
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1**state.t)
    v_hat = state.v / (1 - beta2**state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


class BatchSampler:
    """Endless minibatches without replacement, reshuffling at each wrap."""

    def __init__(self, n: int, rng: ad.Rng):
        if n < 1:
            raise ValueError("cannot sample from an empty dataset")
        self.n = n
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self, size: int) -> np.ndarray:
        out = []
        while size > 0:
            if self._pos == self.n:
                self._order = self.rng.permutation(self.n)
                self._pos = 0
            take = min(size, self.n - self._pos)
            out.append(self._order[self._pos: self._pos + take])
            self._pos += take
            size -= take
        return np.concatenate(out)


def error_rate(spec: ClassifierSpec, params: ParamSet, ds: Dataset, batch: int = 2000) -> float:
    wrong = 0
    for i in range(0, len(ds), batch):
        z = logits(spec, params, ds.inputs[i: i + batch])
        wrong += int(np.sum(np.argmax(z.data, axis=1) != ds.labels[i: i + batch]))
    return wrong / max(len(ds), 1)


def train(
    spec: ClassifierSpec,
    labeled: Dataset,
    unlabeled: Dataset | None,
    cfg: TrainConfig,
    rng: ad.Rng,
    eval_sets: Mapping[str, Dataset] | None = None,
    init: ParamSet | None = None,
    callback: Callable[[int, ParamSet], None] | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> tuple[ParamSet, list[RunRecord]]:
    """Run ``cfg.updates`` ADAM steps and return the final parameters and records.

    Each step draws a labeled minibatch for the likelihood and an independent
    minibatch from labeled + unlabeled inputs for the regulariser.
    ``callback(update, params)`` runs before each update (and once after the
    last) for instrumentation; ``on_record`` receives each record as it is made.
    """
    if labeled.labels is None or len(labeled) == 0:
        raise ValueError("training needs a non-empty labeled set")
    params = init.copy() if init is not None else init_params(spec, rng.substream("init"))
    pool = labeled.inputs
    if unlabeled is not None and len(unlabeled):
        pool = np.concatenate([labeled.inputs, unlabeled.inputs])
    lab_sampler = BatchSampler(len(labeled), rng.substream("labeled-batches"))
    mix_sampler = BatchSampler(len(pool), rng.substream("mixed-batches"))
    step_rng = rng.substream("updates")
    state = AdamState.zeros(len(params))
    records: list[RunRecord] = []
    eval_sets = dict(eval_sets or {})
    t0 = time.perf_counter()

    for update in range(cfg.updates):
        if callback is not None:
            callback(update, params)
        li = lab_sampler.next(cfg.batch_labeled)
        x_mixed = pool[mix_sampler.next(cfg.batch_unlabeled)] if cfg.method in SMOOTHING else None
        # overflow surfaces as NonFiniteError from the tape, so numpy's warning is redundant
        with np.errstate(over="ignore", invalid="ignore"):
            terms = full_objective(
                spec, params, (labeled.inputs[li], labeled.labels[li]), x_mixed, cfg,
                step_rng.substream(update),
            )
        if not np.isfinite(terms.total):
            raise ad.NonFiniteError(f"objective became non-finite at update {update}")
        lr = cfg.learning_rate(update)
        params = params.with_theta(
            adam_step(params.theta, terms.grad, state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        )
        last = update == cfg.updates - 1
        metrics = {}
        if eval_sets and ((cfg.eval_every and (update + 1) % cfg.eval_every == 0) or last):
            metrics = {f"{k}_error": error_rate(spec, params, ds) for k, ds in eval_sets.items()}
        if update % cfg.record_every == 0 or last or metrics:
            rec = RunRecord(
                update, terms.nll, terms.r_vadv, terms.r_cent, terms.total,
                terms.backprops, time.perf_counter() - t0, lr, metrics,
            )
            records.append(rec)
            if on_record is not None:
                on_record(rec)
            if metrics:
                log.info("update %d: %s", update, metrics)
    if callback is not None:
        callback(cfg.updates, params)
    return params, records
