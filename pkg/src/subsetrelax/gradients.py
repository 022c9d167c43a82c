"""Reverse-mode derivatives of the successive-softmax relaxation.

The k-step recurrence is unrolled forward, keeping every step
probability, and cotangents are pulled back step by step through the
softmax and the ``log(1 - p)`` update. Gumbel noise enters the scores
additively, so the Jacobian with respect to log-weights equals the
Jacobian with respect to scores at the realized keys.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import as_weights
from .errors import SaturationWarning, SubsetRelaxError, WeightsError
from .relaxation import _validate, successive_softmax
from .samplers import gumbel_keys


@dataclass(frozen=True)
class JacobianRecord:
    """``matrix[i, j]`` is the derivative of mass ``a_i`` w.r.t. score ``s_j``."""

    matrix: np.ndarray
    k: int
    t: float
    scores: np.ndarray
    saturated: bool = False

    @property
    def column_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def _pullback(steps, saved, t, step_cot):
    """Reverse pass; ``steps`` and ``step_cot`` have shape ``(k, ..., n)``."""
    k = steps.shape[0]
    abar = np.zeros(steps.shape[1:])
    for j in range(k - 1, -1, -1):
        p = steps[j]
        pbar = step_cot[j]
        zbar = p * (pbar - np.sum(pbar * p, axis=-1, keepdims=True))
        if j + 1 < k:
            zbar = zbar + _log_complement_vjp(p, *saved[j], abar)
        abar = abar + zbar / t
    return abar


def _log_complement_vjp(p, top, rest, c):
    # d log(1 - p_i) / d z_m = [m != i] p_m / (1 - p_i) - p_m.
    # 1 / (1 - p_i) is only unbounded for the argmax entry, whose column
    # is the softmax over the other entries (``rest``).
    c_top = np.take_along_axis(c, top, axis=-1)
    inv = 1.0 / (1.0 - np.minimum(p, 0.5))
    np.put_along_axis(inv, top, 0.0, axis=-1)
    ci = c * inv
    return (p * (ci.sum(axis=-1, keepdims=True) - ci)
            + c_top * rest
            - p * np.sum(c, axis=-1, keepdims=True))


def relaxed_topk_vjp(scores, k: int, t: float, grad_mass=None, grad_steps=None):
    """Pull a cotangent on the relaxed output back to the scores.

    ``grad_mass`` has the shape of the scores ``(..., n)``; ``grad_steps``
    has shape ``(k, ..., n)``. Either may be omitted. Returns
    ``(forward_steps, score_cotangent)``.
    """
    s = _validate(scores, k, t)
    steps, _, saved = successive_softmax(s, k, t, keep=True)
    cot = np.zeros_like(steps)
    if grad_mass is not None:
        cot += np.asarray(grad_mass, dtype=np.float64)[None]
    if grad_steps is not None:
        cot += np.asarray(grad_steps, dtype=np.float64)
    return steps, _pullback(steps, saved, t, cot)


def relaxed_topk_jacobian(scores, k: int, t: float) -> JacobianRecord:
    """Exact Jacobian of the relaxed mass with respect to the scores.

    If a step probability before the last rounded to exactly 1, the
    derivatives through that step are below double precision and come out
    as zero; a :class:`SaturationWarning` is issued and the record flagged.
    """
    s = _validate(scores, k, t)
    if s.ndim != 1:
        raise SubsetRelaxError("relaxed_topk_jacobian expects a 1-D score vector")
    n = s.size
    # one reverse pass per output coordinate, batched over rows
    sb = np.broadcast_to(s, (n, n)).copy()
    steps, saturated, saved = successive_softmax(sb, k, t, keep=True)
    cot = np.broadcast_to(np.eye(n), (k, n, n))
    jac = _pullback(steps, saved, t, cot)
    saturated = bool(saturated[0])
    if saturated:
        warnings.warn(
            "a step probability rounded to 1; derivatives through it underflow to zero",
            SaturationWarning,
            stacklevel=2,
        )
    return JacobianRecord(jac, k, float(t), s.copy(), saturated)


def grad_wrt_log_weights(w, k: int, t: float, rng) -> JacobianRecord:
    """Jacobian of a relaxed subset sample with respect to ``log(w)``.

    The noise is held fixed, so this is the score Jacobian at the realized
    Gumbel keys. Rows and columns of zero-weight items are zero.
    """
    w = as_weights(w)
    if k > w.n_positive:
        raise WeightsError(f"k={k} exceeds the number of positive weights ({w.n_positive})")
    keys = gumbel_keys(w, rng)
    active = keys.active
    if active.all():
        return relaxed_topk_jacobian(keys.values, k, t)
    sub = relaxed_topk_jacobian(keys.values[active], k, t)
    full = np.zeros((w.n, w.n))
    full[np.ix_(active, active)] = sub.matrix
    return JacobianRecord(full, k, float(t), keys.values.copy(), sub.saturated)


@dataclass(frozen=True)
class FDReport:
    max_error: float
    mean_error: float
    analytic: np.ndarray
    numeric: np.ndarray

    def passed(self, tol: float) -> bool:
        return self.max_error < tol


def central_difference(f: Callable, s, h: float = 1e-5) -> np.ndarray:
    """Central-difference derivative of ``f`` at ``s``.

    ``f`` may be scalar- or vector-valued; the result has shape
    ``f(s).shape + s.shape``.
    """
    if not h > 0:
        raise SubsetRelaxError(f"step h must be positive, got {h}")
    s = np.asarray(s, dtype=np.float64)
    cols = []
    for j in range(s.size):
        e = np.zeros_like(s)
        e.flat[j] = h
        hi = np.asarray(f(s + e), dtype=np.float64)
        lo = np.asarray(f(s - e), dtype=np.float64)
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise SubsetRelaxError(f"non-finite function value at coordinate {j}")
        cols.append((hi - lo) / (2 * h))
    return np.stack(cols, axis=-1).reshape(np.shape(cols[0]) + s.shape)


def finite_difference_check(f: Callable, grad, s, h: float = 1e-5) -> FDReport:
    """Compare an analytic gradient against central differences of ``f``.

    ``grad`` is either the analytic gradient at ``s`` or a callable
    returning it. Works for vector-valued ``f`` too, in which case
    ``grad`` is the full Jacobian.
    """
    s = np.asarray(s, dtype=np.float64)
    analytic = np.asarray(grad(s) if callable(grad) else grad, dtype=np.float64)
    numeric = central_difference(f, s, h)
    if analytic.shape != numeric.shape:
        raise SubsetRelaxError(
            f"analytic gradient shape {analytic.shape} != numeric shape {numeric.shape}"
        )
    err = np.abs(analytic - numeric)
    return FDReport(float(err.max(initial=0.0)), float(err.mean()) if err.size else 0.0,
                    analytic, numeric)
