"""Command-line interface: ``vatlab <subcommand> [options]``.

Configuration is a flat ``key = value`` file (``--config``) overridden by
``--set key=value`` and the shortcut flags. The resolved configuration is
written to ``<out>/config.resolved`` before anything runs; passing that file
back with the same seed reproduces every emitted file.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError, Rng
from .data import DataError, write_csv
from .experiments import TASK_DEFAULTS, Task, mnist_task, probe_r_vadv, run, synth2d_task
from .model import ClassifierSpec, ModelFormatError, init_params, load_model, save_model
from .objective import TrainConfig, error_rate, full_objective, evaluate_frozen
from .oracle import (
    Grid,
    compare_vadv_to_oracle,
    dense_hessian,
    lds_heatmap,
    normalized_sd_norm,
    numerical_gradient,
    relative_error,
    write_heatmap_csv,
)
from .perturbation import PerturbConfig, hvp_finite_difference

log = logging.getLogger("vatlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4

# calibrated on random (8, 16, 3) MLPs; see tests/test_acceptance.py
COS_THRESHOLD_K1 = 0.85


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).split(",") if v.strip())


KEYS = {
    "task": str,
    "method": str,
    "seed": int,
    "updates": int,
    "lr": float,
    "lr_schedule": str,
    "lr_decay_rate": float,
    "lr_decay_every": int,
    "lr_decay_start": int,
    "alpha": float,
    "beta": float,
    "perturb.eps": float,
    "perturb.xi": float,
    "perturb.K": int,
    "batch.labeled": int,
    "batch.unlabeled": int,
    "model.hidden": _ints,
    "model.noise_sd": float,
    "data.n_labeled": int,
    "data.n_unlabeled": int,
    "data.n_validation": int,
    "data.n_test": int,
    "data.noise": float,
    "record_every": int,
    "eval_every": int,
}


def default_config(task: str) -> dict:
    if task not in TASK_DEFAULTS:
        raise ConfigError(f"unknown task {task!r}; choose from {sorted(TASK_DEFAULTS)}")
    d = TASK_DEFAULTS[task]
    cfg = {
        "task": task,
        "method": "vat",
        "seed": 0,
        "updates": d["updates"],
        "lr": d["lr"],
        "lr_schedule": "constant" if task == "synth2d" else "linear_decay",
        "lr_decay_rate": 0.9,
        "lr_decay_every": 600,
        "lr_decay_start": d["updates"] // 2,
        "alpha": 1.0,
        "beta": 1.0,
        "perturb.eps": d["eps"],
        "perturb.xi": 1e-6,
        "perturb.K": 1,
        "batch.labeled": d["batch_labeled"],
        "batch.unlabeled": d["batch_unlabeled"],
        "model.hidden": d["hidden"],
        "model.noise_sd": 0.0,
        "record_every": 1,
        "eval_every": 0,
    }
    if task == "synth2d":
        cfg.update({"data.n_labeled": 8, "data.n_unlabeled": 1000, "data.noise": 0.08})
    else:
        cfg.update({"data.n_labeled": 1000, "data.n_validation": 1000, "data.n_test": 1000})
    return cfg


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _coerce(key: str, value):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    try:
        return KEYS[key](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def resolve_config(args) -> dict:
    """Defaults for the task, then the file, then ``--set``, then shortcut flags."""
    raw = {}
    if getattr(args, "config", None):
        try:
            raw.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    shortcuts = {
        "task": "task", "method": "method", "seed": "seed", "updates": "updates",
        "lr": "lr", "eps": "perturb.eps", "alpha": "alpha", "beta": "beta", "K": "perturb.K",
    }
    for attr, key in shortcuts.items():
        v = getattr(args, attr, None)
        if v is not None:
            raw[key] = v
    cfg = default_config(str(raw.get("task", "synth2d")))
    for k, v in raw.items():
        cfg[k] = _coerce(k, v)
    if cfg["method"] == "rpt":
        cfg["perturb.K"] = 0
    return cfg


def format_config(cfg: dict) -> str:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(
            method=cfg["method"],
            perturb=PerturbConfig(
                epsilon=cfg["perturb.eps"], xi=cfg["perturb.xi"], power_iterations=cfg["perturb.K"]
            ),
            alpha=cfg["alpha"],
            beta=cfg["beta"],
            batch_labeled=cfg["batch.labeled"],
            batch_unlabeled=cfg["batch.unlabeled"],
            updates=cfg["updates"],
            lr=cfg["lr"],
            lr_schedule=cfg["lr_schedule"],
            lr_decay_rate=cfg["lr_decay_rate"],
            lr_decay_every=cfg["lr_decay_every"],
            lr_decay_start=cfg["lr_decay_start"],
            record_every=cfg["record_every"],
            eval_every=cfg["eval_every"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_task(cfg: dict) -> Task:
    if cfg["task"] == "synth2d":
        return synth2d_task(
            cfg["seed"], cfg["data.n_labeled"], cfg["data.n_unlabeled"], cfg["data.noise"],
            cfg["model.hidden"],
        )
    return mnist_task(
        cfg["seed"], cfg["data.n_labeled"], cfg["data.n_validation"], cfg["data.n_test"],
        cfg.get("data.n_unlabeled"), cfg["model.hidden"], cfg["model.noise_sd"],
    )


def _train_into(cfg: dict, out: Path) -> dict:
    """One training run writing config.resolved, metrics.jsonl, checkpoint.vatm, summary.json."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(format_config(cfg))
    tcfg = train_config(cfg)
    task = build_task(cfg)
    with open(out / "metrics.jsonl", "w") as fh, open(out / "timing.csv", "w") as tf:
        tf.write("update,wallclock\n")

        def emit(rec):
            row = rec.to_json()
            # wall-clock time goes to its own file so metrics.jsonl reproduces bit-exactly
            tf.write(f"{rec.update},{row.pop('wallclock')!r}\n")
            fh.write(json.dumps(row, sort_keys=True) + "\n")

        result = run(task, tcfg, cfg["seed"], on_record=emit)
    save_model(out / "checkpoint.vatm", task.spec, result.params)
    counts = sorted({r.backprops_this_update for r in result.records})
    summary = {
        "task": cfg["task"],
        "method": tcfg.method,
        "seed": cfg["seed"],
        "epsilon": tcfg.perturb.epsilon,
        "K": tcfg.perturb.power_iterations,
        "updates": tcfg.updates,
        "errors": result.errors,
        "validation_error": result.errors.get("validation"),
        "test_error": result.errors.get("test"),
        "mean_r_vadv_last_10pct": result.mean_r_vadv_tail(0.1),
        "final_nll": result.records[-1].nll if result.records else None,
        "backprops_per_update": counts,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _guarded(fn):
    def wrapper(args):
        try:
            return fn(args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (DataError, ModelFormatError, FileNotFoundError) as exc:
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        except NonFiniteError as exc:
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC

    return wrapper


@_guarded
def cmd_train(args) -> int:
    cfg = resolve_config(args)
    summary = _train_into(cfg, Path(args.out))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _sweep_one(item):
    cfg, out = item
    return _train_into(cfg, out)


@_guarded
def cmd_sweep_eps(args) -> int:
    base = resolve_config(args)
    eps_list = _floats(args.eps_list)
    if not eps_list:
        raise ConfigError("--eps-list is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(format_config(base))
    jobs = [({**base, "perturb.eps": e}, out / f"eps_{e:g}") for e in eps_list]
    if args.parallel > 1:
        with ProcessPoolExecutor(args.parallel) as pool:
            summaries = list(pool.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(j) for j in jobs]
    with open(out / "sweep.csv", "w") as fh:
        fh.write("eps,val_error,r_vadv_final\n")
        for e, s in zip(eps_list, summaries):
            fh.write(f"{e!r},{s['validation_error']!r},{s['mean_r_vadv_last_10pct']!r}\n")
    print((out / "sweep.csv").read_text(), end="")
    return EXIT_OK


def _rank1_model() -> tuple[ClassifierSpec, object]:
    from .model import ParamSet

    spec = ClassifierSpec(2, (), 2)
    params = ParamSet.for_spec(spec)
    params.arrays()["W0"][0, 0] = 1.0
    return spec, params


def random_oracle_models(n: int, seed: int, input_dim: int, hidden, classes: int):
    """Random MLPs with He init and a Gaussian input each; shared by oracle-check and calibration."""
    for m in range(n):
        r = Rng(seed).substream("model", m)
        spec = ClassifierSpec(input_dim, hidden, classes)
        yield spec, init_params(spec, r.substream("init")), r.substream("x").normal(input_dim), r


def oracle_report(args) -> tuple[dict, list[str]]:
    ks = _ints(args.K)
    xi = args.xi
    failures: list[str] = []
    report: dict = {"xi": xi, "K": list(ks)}

    if args.model in ("rank1", "both"):
        spec, params = _rank1_model()
        x = np.zeros(2)
        hess = dense_hessian(spec, params, x)
        d = np.array([[1.0, 0.0]])
        hv = hvp_finite_difference(spec, params, x, d, xi)[0]
        hvp_err = relative_error(hv, hess.H @ d[0])
        stats = {
            k: compare_vadv_to_oracle(
                spec, params, x, PerturbConfig(1.0, xi, k), args.trials, Rng(args.seed).substream("rank1", k), hess
            )
            for k in ks
        }
        report["rank1"] = {"lambda1": hess.lambda1, "hvp_rel_error": hvp_err, "cosine": stats}
        if hvp_err > 1e-3:
            failures.append(
                f"rank1: finite-difference HVP disagrees with the dense Hessian (rel. error {hvp_err:.3g}); "
                f"xi={xi:g} is outside the linear regime"
            )
        for k, s in stats.items():
            if k >= 1 and s["mean_abs_cos"] < 1 - 1e-3:
                failures.append(f"rank1: mean |cos| {s['mean_abs_cos']:.4f} < 0.999 at K={k}")

    if args.model in ("random", "both"):
        per_k = {k: [] for k in ks}
        hvp_errs, grad_errs, ratios = [], [], []
        for spec, params, x, r in random_oracle_models(args.models, args.seed, args.input_dim, _ints(args.hidden), args.classes):
            hess = dense_hessian(spec, params, x)
            ratios.append(hess.eig_ratio)
            d = r.substream("d").normal(len(x))
            d /= np.linalg.norm(d)
            hvp_errs.append(relative_error(hvp_finite_difference(spec, params, x, d[None], xi)[0], hess.H @ d))
            for k in ks:
                s = compare_vadv_to_oracle(
                    spec, params, x, PerturbConfig(1.0, xi, k), args.trials, r.substream("trials", k), hess
                )
                per_k[k].append(s["mean_abs_cos"])
        means = {k: float(np.mean(v)) for k, v in per_k.items()}
        grad_errs.append(_objective_gradient_error(xi))
        report["random"] = {
            "models": args.models,
            "mean_abs_cos": means,
            "median_eig_ratio": float(np.median(ratios)),
            "max_hvp_rel_error": float(max(hvp_errs)),
            "objective_grad_rel_error": float(max(grad_errs)),
        }
        if max(hvp_errs) > 1e-2:
            failures.append(
                f"random: finite-difference HVP disagrees with the dense Hessian "
                f"(max rel. error {max(hvp_errs):.3g}); xi={xi:g} is outside the linear regime"
            )
        ordered = [means[k] for k in sorted(means)]
        if any(b < a - 1e-3 for a, b in zip(ordered, ordered[1:])):
            failures.append(f"random: mean |cos| is not non-decreasing in K: {means}")
        if 1 in means and means[1] < COS_THRESHOLD_K1:
            failures.append(f"random: mean |cos| at K=1 is {means[1]:.3f} < {COS_THRESHOLD_K1}")
        if max(grad_errs) > 1e-4:
            failures.append(f"objective gradient check failed (rel. error {max(grad_errs):.3g})")
    report["failures"] = failures
    report["passed"] = not failures
    return report, failures


def _objective_gradient_error(xi: float) -> float:
    spec = ClassifierSpec(3, (6,), 3)
    params = init_params(spec, Rng(7).substream("init"))
    r = Rng(7).substream("data")
    xl, yl, xm = r.normal((5, 3)), r.integers(0, 3, 5), r.normal((7, 3))
    cfg = TrainConfig(method="vat", perturb=PerturbConfig(0.5, xi, 1))
    terms = full_objective(spec, params, (xl, yl), xm, cfg, Rng(8))
    value = lambda th: evaluate_frozen(spec, params.with_theta(th), terms.frozen, cfg, False)[0]["total"]  # noqa: E731
    return relative_error(terms.grad, numerical_gradient(value, params.theta))


@_guarded
def cmd_oracle_check(args) -> int:
    report, failures = oracle_report(args)
    text = json.dumps(_finite(report), indent=2, sort_keys=True, default=_jsonable)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "oracle.json").write_text(text + "\n")
    print(text)
    for f in failures:
        print(f"FAIL: {f}", file=sys.stderr)
    return EXIT_INVARIANT if failures else EXIT_OK


def _finite(v):
    """Strict JSON has no Infinity; unbounded ratios are written as the string "inf"."""
    if isinstance(v, dict):
        return {str(k): _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    if isinstance(v, (float, np.floating)) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf" if v < 0 else "nan"
    return v


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


@_guarded
def cmd_heatmap(args) -> int:
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint {args.checkpoint} does not exist")
    spec, params = load_model(args.checkpoint)
    g = _floats(args.grid)
    if len(g) != 6:
        raise ConfigError("--grid needs xmin,xmax,ymin,ymax,nx,ny")
    grid = Grid((g[0], g[1]), (g[2], g[3]), (int(g[4]), int(g[5])))
    try:
        values = lds_heatmap(spec, params, grid, PerturbConfig(args.eps, 1e-6, args.K), Rng(args.seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_heatmap_csv(out / "heatmap.csv", grid, values)
    print(json.dumps({"file": str(out / "heatmap.csv"), "max": float(values.max()), "mean": float(values.mean())}))
    return EXIT_OK


@_guarded
def cmd_sdnorm(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(format_config(cfg))
    tcfg = train_config(cfg)
    task = build_task(cfg)
    ks = _ints(args.Ks)
    pool = np.concatenate([task.labeled.inputs, task.unlabeled.inputs])
    rows = []
    stop = int(tcfg.updates * args.until)
    probe_eps = tcfg.perturb.epsilon if args.probe_eps is None else args.probe_eps

    def probe(update, params):
        if update % args.every or update > stop:
            return
        for k in ks:
            rep = normalized_sd_norm(
                task.spec, params, pool, PerturbConfig(probe_eps, tcfg.perturb.xi, k),
                args.M, args.num_samples, Rng(cfg["seed"]).substream("sdnorm", update, k),
            )
            rows.append((update, k, float(rep.normalized_sd_norm)))

    run(task, tcfg, cfg["seed"], callback=probe)
    with open(out / "sdnorm.csv", "w") as fh:
        fh.write("update,K,sd_norm\n")
        for u, k, v in rows:
            fh.write(f"{u},{k},{v!r}\n")
    if args.num_samples < 8:
        print(f"note: num_samples={args.num_samples} gives a wide confidence interval", file=sys.stderr)
    print(json.dumps({"file": str(out / "sdnorm.csv"), "checkpoints": len(rows)}))
    return EXIT_OK


@_guarded
def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint {args.checkpoint} does not exist")
    spec, params = load_model(args.checkpoint)
    cfg = resolve_config(args)
    task = build_task(cfg)
    if task.spec.input_dim != spec.input_dim or task.spec.num_classes != spec.num_classes:
        raise ConfigError("checkpoint does not match the task's input/class dimensions")
    errors = {k: error_rate(spec, params, ds) for k, ds in task.eval_sets.items()}
    probe = task.eval_sets.get("validation", task.labeled).inputs[:500]
    report = {
        "errors": errors,
        "r_vadv_K1": probe_r_vadv(spec, params, probe, cfg["perturb.eps"], 1),
        "r_vadv_K0": probe_r_vadv(spec, params, probe, cfg["perturb.eps"], 0),
    }
    if args.export_csv:
        write_csv(args.export_csv, task.labeled)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


FILES_HELP = """\
output files:
  config.resolved  flat 'key = value' configuration actually used
  metrics.jsonl    one JSON object per record: update, nll, r_vadv, r_cent, total,
                   backprops_this_update, lr, metrics
  timing.csv       update,wallclock (seconds since the start of training)
  summary.json     errors per evaluation set, validation_error, test_error,
                   mean_r_vadv_last_10pct, final_nll, backprops_per_update
  checkpoint.vatm  binary model (magic VATM, version, architecture, f64 parameters)
  sweep.csv        eps,val_error,r_vadv_final
  heatmap.csv      x,y,lds (row-major, y outer)
  sdnorm.csv       update,K,sd_norm
  oracle.json      cosine statistics, HVP and gradient-check errors, failures

config keys: """ + ", ".join(sorted(KEYS)) + """

exit codes: 0 ok, 1 config error, 2 data error, 3 non-finite loss, 4 invariant failure
datasets: MNIST IDX files are looked up under $VATLAB_DATA_DIR (default ./data)
"""


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--task", choices=sorted(TASK_DEFAULTS))
    p.add_argument("--method")
    p.add_argument("--eps", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vatlab", description=__doc__, epilog=FILES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model", epilog=FILES_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, "runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-eps", help="one run per epsilon", epilog=FILES_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, "runs/sweep")
    p.add_argument("--eps-list", required=True, help="comma-separated epsilon values")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("oracle-check", help="compare approximations with brute-force oracles",
                       epilog=FILES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", choices=("rank1", "random", "both"), default="both")
    p.add_argument("--K", default="1,2,4", help="comma-separated power-iteration counts")
    p.add_argument("--xi", type=float, default=1e-6)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--input-dim", type=int, default=8)
    p.add_argument("--hidden", default="16")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("heatmap", help="LDS heat map of a 2-D checkpoint", epilog=FILES_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", default="-1.5,2.5,-1.0,1.5,60,40", help="xmin,xmax,ymin,ymax,nx,ny")
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/heatmap")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("sdnorm", help="normalized SD norm of the regulariser gradient during training",
                       epilog=FILES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, "runs/sdnorm")
    p.add_argument("--Ks", default="0,1")
    p.add_argument("--every", type=int, default=100)
    p.add_argument("--until", type=float, default=0.5, help="fraction of training to probe")
    p.add_argument("--M", type=int, default=128, help="minibatch size per sample")
    p.add_argument("--probe-eps", type=float, help="radius used by the probe (default: the training eps)")
    p.add_argument("--num-samples", type=int, default=64)
    p.set_defaults(func=cmd_sdnorm)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a task", epilog=FILES_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, "runs/eval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--export-csv", help="also write the task's labeled set as CSV")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
