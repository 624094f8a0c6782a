"""Task builders and run helpers shared by the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Rng
from .data import Dataset, gen_two_clusters, load_mnist, split_indices
from .model import ClassifierSpec, ParamSet
from .objective import RunRecord, TrainConfig, error_rate, train
from .perturbation import PerturbConfig


@dataclass
class Task:
    name: str
    spec: ClassifierSpec
    labeled: Dataset
    unlabeled: Dataset
    eval_sets: dict[str, Dataset] = field(default_factory=dict)


def synth2d_task(
    seed: int,
    n_labeled: int = 8,
    n_unlabeled: int = 1000,
    noise: float = 0.08,
    hidden: tuple[int, ...] = (50,),
) -> Task:
    """Two-moons semi-supervised task.

    ``eval_sets["unlabeled"]`` scores the unlabeled points against their
    cluster ids; ``validation`` and ``test`` are fresh labeled draws.
    """
    rng = Rng(seed).substream("data")
    labeled, unlabeled, truth = gen_two_clusters(rng.substream("train"), n_labeled, n_unlabeled, noise)
    evals = {"unlabeled": Dataset(unlabeled.inputs, truth, "moons-unlabeled-truth")}
    for name in ("validation", "test"):
        a, b, t = gen_two_clusters(rng.substream(name), 0, 1000, noise)
        evals[name] = Dataset(b.inputs, t, f"moons-{name}")
    return Task("synth2d", ClassifierSpec(2, hidden, 2), labeled, unlabeled, evals)


def mnist_task(
    seed: int,
    n_labeled: int = 1000,
    n_validation: int = 1000,
    n_test: int = 1000,
    n_unlabeled: int | None = None,
    hidden: tuple[int, ...] = (256, 128),
    noise_sd: float = 0.0,
    root=None,
) -> Task:
    """Class-balanced labeled draw, validation and test holdouts, rest unlabeled."""
    ds = load_mnist(root)
    li, ui, vi = split_indices(ds, Rng(seed).substream("split"), n_labeled, n_validation)
    order = ui[Rng(seed).substream("test").permutation(len(ui))]
    ti, ui = np.sort(order[:n_test]), np.sort(order[n_test:])
    if n_unlabeled is not None:
        ui = ui[:n_unlabeled]
    return Task(
        "mnist",
        ClassifierSpec(ds.input_dim, hidden, 10, noise_sd),
        ds.subset(li, "mnist-labeled"),
        ds.subset(ui, "mnist-unlabeled", keep_labels=False),
        {"validation": ds.subset(vi, "mnist-validation"), "test": ds.subset(ti, "mnist-test")},
    )


TASK_DEFAULTS = {
    "synth2d": dict(
        lr=0.01, batch_labeled=8, batch_unlabeled=128, updates=3000, eps=0.2, hidden=(50,)
    ),
    "mnist": dict(
        lr=0.002, batch_labeled=64, batch_unlabeled=256, updates=3000, eps=2.0, hidden=(256, 128)
    ),
}


@dataclass
class RunResult:
    params: ParamSet
    records: list[RunRecord]
    errors: dict[str, float]

    def mean_r_vadv_tail(self, frac: float = 0.1) -> float:
        n = max(int(round(len(self.records) * frac)), 1)
        return float(np.mean([r.r_vadv for r in self.records[-n:]]))


def run(task: Task, cfg: TrainConfig, seed: int, callback=None, on_record=None) -> RunResult:
    params, records = train(
        task.spec, task.labeled, task.unlabeled, cfg, Rng(seed),
        eval_sets=task.eval_sets if cfg.eval_every else None,
        callback=callback, on_record=on_record,
    )
    errors = {k: error_rate(task.spec, params, ds) for k, ds in task.eval_sets.items()}
    return RunResult(params, records, errors)


def with_eps(cfg: TrainConfig, eps: float) -> TrainConfig:
    return replace(cfg, perturb=replace(cfg.perturb, epsilon=eps))


def probe_r_vadv(
    spec: ClassifierSpec, params: ParamSet, inputs: np.ndarray, eps: float, K: int, seed: int = 0
) -> float:
    """Mean LDS of a fixed model over ``inputs`` using ``K`` power iterations."""
    from .oracle import lds_per_example

    cfg = PerturbConfig(epsilon=eps, power_iterations=K)
    return float(np.mean(lds_per_example(spec, params, inputs, cfg, Rng(seed).substream("probe", K))))
