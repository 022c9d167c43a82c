"""Forward-pass timing of the relaxation as the candidate count grows."""

from __future__ import annotations

import time

import numpy as np

from ..errors import SubsetRelaxError
from ..relaxation import relaxed_topk


def _time_forward(scores: np.ndarray, k: int, t: float, trials: int) -> np.ndarray:
    relaxed_topk(scores, k, t)  # warm-up
    out = np.empty(trials)
    for i in range(trials):
        start = time.perf_counter()
        relaxed_topk(scores, k, t)
        out[i] = time.perf_counter() - start
    return out * 1e3


def scaling_benchmark(m_values, k: int = 5, t: float = 1.0, trials: int = 100, seed: int = 0):
    """Time ``relaxed_topk`` over ``m`` candidates for each ``m``.

    Returns a list of row dicts with ``m``, ``k``, ``mean_ms``, ``std_ms``
    and ``median_ms``. A ``k=1`` baseline row is added per ``m`` when
    ``k > 1``; ``ratio`` is the median time relative to the previous
    ``m`` at the same ``k``.
    """
    m_values = [int(m) for m in m_values]
    if k < 1:
        raise SubsetRelaxError(f"k must be at least 1, got {k}")
    if trials < 1:
        raise SubsetRelaxError("trials must be positive")
    if not m_values or any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise SubsetRelaxError("m values must be non-empty and strictly ascending")
    if m_values[0] < k:
        raise SubsetRelaxError(f"every m must be at least k={k}")
    gen = np.random.default_rng(seed)
    ks = [k] if k == 1 else [1, k]
    rows = []
    for kk in ks:
        prev = None
        for m in m_values:
            ms = _time_forward(gen.standard_normal(m), kk, t, trials)
            med = float(np.median(ms))
            rows.append({
                "m": m,
                "k": kk,
                "mean_ms": float(ms.mean()),
                "std_ms": float(ms.std(ddof=1)) if trials > 1 else 0.0,
                "median_ms": med,
                "ratio": med / prev if prev else None,
            })
            prev = med
    return rows
