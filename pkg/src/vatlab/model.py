"""Feed-forward ReLU classifier with optional Gaussian noise on hidden units."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Rng, ShapeError, Tape, Tensor, add, matmul, relu

MAGIC = b"VATM"
VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int
    hidden_noise_sd: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be >= 1")
        if self.hidden_noise_sd < 0:
            raise ValueError("hidden_noise_sd must be non-negative")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)


@dataclass
class ParamSet:
    """All weights and biases as one flat vector plus a name -> slice layout."""

    theta: np.ndarray
    layout: dict[str, tuple[slice, tuple[int, ...]]] = field(repr=False)

    @classmethod
    def for_spec(cls, spec: ClassifierSpec, theta: np.ndarray | None = None) -> "ParamSet":
        layout = {}
        start = 0
        for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
            for name, shape in ((f"W{k}", (fan_in, fan_out)), (f"b{k}", (fan_out,))):
                n = int(np.prod(shape))
                layout[name] = (slice(start, start + n), shape)
                start += n
        if theta is None:
            theta = np.zeros(start)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (start,):
            raise ShapeError(f"expected {start} parameters, got {theta.shape}")
        return cls(theta, layout)

    def __len__(self) -> int:
        return self.theta.size

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: self.theta[sl].reshape(shape) for k, (sl, shape) in self.layout.items()}

    def leaves(self, tape: Tape) -> dict[str, Tensor]:
        return {k: tape.leaf(v, name=k) for k, v in self.arrays().items()}

    def flatten(self, grads: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.zeros_like(self.theta)
        for k, (sl, _) in self.layout.items():
            out[sl] = np.ravel(grads[k])
        return out

    def with_theta(self, theta: np.ndarray) -> "ParamSet":
        return ParamSet(np.array(theta, dtype=np.float64), self.layout)

    def copy(self) -> "ParamSet":
        return self.with_theta(self.theta)


def init_params(spec: ClassifierSpec, rng: Rng) -> ParamSet:
    """He-scaled Gaussian weights, zero biases."""
    params = ParamSet.for_spec(spec)
    for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
        sl, shape = params.layout[f"W{k}"]
        params.theta[sl] = rng.normal(shape).ravel() * np.sqrt(2.0 / fan_in)
    return params


def sample_noise(spec: ClassifierSpec, batch: int, rng: Rng) -> list[np.ndarray] | None:
    if spec.hidden_noise_sd == 0 or not spec.hidden_dims:
        return None
    return [spec.hidden_noise_sd * rng.normal((batch, h)) for h in spec.hidden_dims]


def logits(
    spec: ClassifierSpec,
    params,
    x,
    training: bool = False,
    rng: Rng | None = None,
    noise: Sequence[np.ndarray] | None = None,
):
    """Class scores for a batch ``x`` of shape ``(batch, input_dim)``.

    ``params`` is a :class:`ParamSet` (used as constants) or a mapping of
    layer name to tensor. In training mode with ``hidden_noise_sd > 0``,
    Gaussian noise is added to every hidden pre-activation; pass ``noise``
    (from :func:`sample_noise`) to reuse a draw, otherwise it is drawn from
    ``rng``. Outside training mode the result never depends on ``rng``.
    """
    w = params.arrays() if isinstance(params, ParamSet) else params
    xv = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if xv.ndim != 2 or xv.shape[1] != spec.input_dim:
        raise ShapeError(f"expected input of shape (batch, {spec.input_dim}), got {xv.shape}")
    if training and noise is None and spec.hidden_noise_sd > 0:
        if rng is None:
            raise ValueError("training with hidden noise needs an rng or an explicit noise draw")
        noise = sample_noise(spec, xv.shape[0], rng)
    if not training:
        noise = None

    h = x
    n_layers = len(spec.layer_dims)
    for k in range(n_layers):
        h = add(matmul(h, w[f"W{k}"]), w[f"b{k}"])
        if k < n_layers - 1:
            if noise is not None:
                h = add(h, noise[k])
            h = relu(h)
    return h


def predict_proba(spec: ClassifierSpec, params: ParamSet, x) -> np.ndarray:
    from .divergences import softmax

    return softmax(logits(spec, params, x))


def save_model(path, spec: ClassifierSpec, params: ParamSet) -> None:
    """Write the self-describing binary checkpoint format (magic ``VATM``)."""
    header = MAGIC + struct.pack("<BI", VERSION, spec.input_dim)
    header += struct.pack("<I", len(spec.hidden_dims))
    header += struct.pack(f"<{len(spec.hidden_dims)}I", *spec.hidden_dims)
    header += struct.pack("<IdQ", spec.num_classes, spec.hidden_noise_sd, len(params))
    Path(path).write_bytes(header + params.theta.astype("<f8").tobytes())


def load_model(path) -> tuple[ClassifierSpec, ParamSet]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic {buf[:4]!r})")
    try:
        version, input_dim = struct.unpack_from("<BI", buf, 4)
        if version != VERSION:
            raise ModelFormatError(f"{path}: unsupported model version {version}")
        off = 9
        (n_hidden,) = struct.unpack_from("<I", buf, off)
        off += 4
        hidden = struct.unpack_from(f"<{n_hidden}I", buf, off)
        off += 4 * n_hidden
        num_classes, noise_sd, count = struct.unpack_from("<IdQ", buf, off)
        off += struct.calcsize("<IdQ")
    except struct.error as exc:
        raise ModelFormatError(f"{path}: truncated header") from exc
    spec = ClassifierSpec(input_dim, hidden, num_classes, noise_sd)
    if count != spec.num_params or len(buf) - off != 8 * count:
        raise ModelFormatError(f"{path}: parameter buffer does not match the architecture")
    theta = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(np.float64)
    return spec, ParamSet.for_spec(spec, theta)
