"""Independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from molvit import tensor as T
from molvit.model import Model, ModelConfig
from molvit.tensor import Tensor


def finite_difference(f, arrays: dict[str, np.ndarray], h: float) -> dict[str, np.ndarray]:
    """Central differences of scalar ``f()`` w.r.t. every element of every array (mutated in place)."""
    out = {}
    for name, arr in arrays.items():
        g = np.zeros(arr.shape, dtype=np.float64)
        for idx in itertools.product(*(range(n) for n in arr.shape)):
            old = arr[idx]
            arr[idx] = old + h
            up = float(f())
            arr[idx] = old - h
            down = float(f())
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1.0) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def random_model(cfg: ModelConfig, seed: int, std: float = 0.3, dtype=np.float32) -> Model:
    """All parameters random (biases and gains included) so no gradient is structurally zero."""
    rng = np.random.default_rng(seed)
    base = Model.init(cfg, seed)
    with T.precision(dtype):
        weights = {}
        for name, p in base.weights.items():
            data = rng.normal(0.0, std, p.shape)
            if name.endswith(".gain"):
                data += 1.0
            weights[name] = Tensor(data, requires_grad=True, name=name)
    return Model(cfg, weights)


def loop_matmul(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(n)] for i in range(m)]


def loop_attention(q, k, v, mask=None):
    """Row-by-row attention in float64 with explicit exponentials."""
    q, k, v = (np.asarray(x, dtype=np.float64) for x in (q, k, v))
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        scores = []
        for j in range(k.shape[0]):
            if mask is not None and not mask[i][j]:
                scores.append(None)
                continue
            scores.append(sum(q[i, d] * k[j, d] for d in range(q.shape[1])) / math.sqrt(q.shape[1]))
        top = max(s for s in scores if s is not None)
        weights = [0.0 if s is None else math.exp(s - top) for s in scores]
        z = sum(weights)
        for j, wgt in enumerate(weights):
            out[i] += wgt / z * v[j]
    return out


@lru_cache(maxsize=None)
def _lev(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _lev(a[1:], b) + 1,
        _lev(a, b[1:]) + 1,
        _lev(a[1:], b[1:]) + (a[0] != b[0]),
    )


def recursive_levenshtein(a: str, b: str) -> int:
    return _lev(a, b)
