"""Softmax, KL divergence, one-hot NLL and conditional entropy.

Everything that touches a logarithm works in log-space from logits. The
first argument of :func:`kl` is always treated as a constant distribution.
"""
from __future__ import annotations

import numpy as np

from .autodiff import NonFiniteError, Tensor, exp, log_softmax, mean, mul, tensor_sum

__all__ = [
    "softmax",
    "log_softmax_np",
    "kl",
    "kl_rows",
    "nll_onehot",
    "conditional_entropy",
    "entropy_from_logits",
]


def _as_2d(a: np.ndarray) -> np.ndarray:
    return a[None, :] if a.ndim == 1 else a


def log_softmax_np(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to one."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("softmax received non-finite logits")
    return np.exp(log_softmax_np(z))


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def kl(p, q_logits, reduction: str = "mean"):
    """Mean (or sum) over rows of KL(p || softmax(q_logits)).

    ``p`` is a probability array (or a tensor whose value is used as a
    constant); ``q_logits`` may be recorded on a tape. Terms with ``p_i = 0``
    contribute exactly zero.
    """
    pv = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    pv = _as_2d(pv)
    if isinstance(q_logits, Tensor):
        q = q_logits if q_logits.data.ndim == 2 else Tensor(q_logits.data[None, :])
    else:
        q = Tensor(_as_2d(np.asarray(q_logits, dtype=np.float64)))
    if pv.shape != q.shape:
        raise ValueError(f"class-count mismatch: p {pv.shape} vs logits {q.shape}")
    neg_entropy = _plogp(pv).sum(axis=1)
    cross = tensor_sum(mul(pv, log_softmax(q)), axis=1)
    rows = neg_entropy - cross
    out = tensor_sum(rows) if reduction == "sum" else mean(rows)
    return out if isinstance(q_logits, Tensor) else out.item()


def kl_rows(p: np.ndarray, q_logits: np.ndarray) -> np.ndarray:
    """Per-row KL(p || softmax(q_logits)) without recording anything."""
    p = _as_2d(np.asarray(p, dtype=np.float64))
    lq = log_softmax_np(_as_2d(np.asarray(q_logits, dtype=np.float64)))
    return _plogp(p).sum(axis=1) - (p * lq).sum(axis=1)


def nll_onehot(labels, logits):
    """Mean of ``-log softmax(logits)[label]`` over the batch."""
    labels = np.asarray(labels)
    z = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float64))
    n, c = z.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels.astype(int)] = 1.0
    out = -(tensor_sum(mul(onehot, log_softmax(z))) * (1.0 / n))
    return out if isinstance(logits, Tensor) else out.item()


def conditional_entropy(probs) -> float:
    """Mean over rows of ``-sum_y p log p`` with ``0 log 0 = 0``."""
    p = _as_2d(np.asarray(probs, dtype=np.float64))
    return float(-_plogp(p).sum(axis=1).mean())


def entropy_from_logits(logits: Tensor) -> Tensor:
    """Differentiable mean conditional entropy of ``softmax(logits)``."""
    ls = log_softmax(logits)
    return -mean(tensor_sum(mul(exp(ls), ls), axis=1))
