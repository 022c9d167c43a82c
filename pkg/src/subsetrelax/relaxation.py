"""Successive-softmax relaxation of top-k selection.

Scores ``s`` are in the log domain. Starting from ``alpha = s`` the
relaxation takes ``k`` softmax steps at temperature ``t``::

    p_j   = softmax(alpha / t)
    alpha = alpha + log(1 - p_j)

and returns the per-step vectors ``p_j`` together with their sum, the
relaxed k-hot vector. As ``t -> 0`` the steps approach the one-hot
vectors of the ``k`` largest scores in order.

Gumbel keys are passed in as scores unchanged, so a relaxed subset
sample is ``relaxed_topk(log(w) + gumbel_noise, k, t)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .distributions import as_weights
from .errors import SubsetRelaxError, WeightsError
from .samplers import as_stream, gumbel_keys, gumbel_keys_from_uniforms, log_weights


@dataclass(frozen=True)
class RelaxedKHot:
    """Output of the relaxation.

    ``mass`` sums to ``k``. ``steps`` has shape ``(k, n)`` and each row is
    a probability vector. Entries of ``mass`` can exceed 1 when ``t < 1``.
    ``saturated`` is set when some step probability before the last one
    rounded to exactly 1, so derivatives through that step vanish below
    double precision.
    """

    mass: np.ndarray
    steps: np.ndarray
    k: int
    t: float
    saturated: bool = False

    def hard(self) -> np.ndarray:
        return topk_mask(self.mass, self.k)


class RelaxedTopK(Protocol):
    def __call__(self, scores, k: int, t: float) -> RelaxedKHot: ...


def _validate(scores, k: int, t: float) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim < 1 or s.shape[-1] == 0:
        raise SubsetRelaxError("scores must be a non-empty vector")
    if not np.all(np.isfinite(s)):
        raise SubsetRelaxError("scores must be finite")
    if not (np.isfinite(t) and t > 0):
        raise SubsetRelaxError(f"temperature must be positive, got {t}")
    if k < 1 or k > s.shape[-1]:
        raise SubsetRelaxError(f"k={k} must be in [1, {s.shape[-1]}]")
    return s


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _log_complement(z: np.ndarray, p: np.ndarray):
    """``log(1 - softmax(z))`` without cancellation.

    Only the largest entry can exceed 1/2; for it the complement is the
    mass of all other entries, computed as a log-sum-exp over them. Also
    returns the argmax index and the softmax over the remaining entries,
    which the backward pass reuses.
    """
    with np.errstate(divide="ignore"):
        out = np.log1p(-np.minimum(p, 0.5))
    top = np.argmax(z, axis=-1)[..., None]
    z_top = np.take_along_axis(z, top, axis=-1)
    rest = z.copy()
    np.put_along_axis(rest, top, -np.inf, axis=-1)
    rest_max = rest.max(axis=-1, keepdims=True)
    e = np.exp(rest - rest_max)
    rest_sum = e.sum(axis=-1, keepdims=True)
    shifted_all = z - z_top
    log_all = np.log(np.sum(np.exp(shifted_all), axis=-1, keepdims=True))
    log_comp = (rest_max - z_top) + np.log(rest_sum) - log_all
    np.put_along_axis(out, top, log_comp, axis=-1)
    return out, top, e / rest_sum


def successive_softmax(s: np.ndarray, k: int, t: float, keep: bool = False):
    """Unrolled recurrence on already-validated scores of shape ``(..., n)``.

    Returns ``(steps, saturated)`` with ``steps`` of shape ``(k, ..., n)``
    and ``saturated`` a boolean array over the leading batch shape. With
    ``keep=True`` a third item lists, per update, the argmax index and the
    softmax over the other entries, for :mod:`subsetrelax.gradients`.
    """
    steps = np.empty((k,) + s.shape)
    saved = []
    saturated = np.zeros(s.shape[:-1], dtype=bool)
    alpha = s.copy()
    for j in range(k):
        z = alpha / t
        p = np.exp(_log_softmax(z))
        steps[j] = p
        if j + 1 < k:
            saturated |= p.max(axis=-1) >= 1.0
            log_comp, top, rest = _log_complement(z, p)
            alpha = alpha + log_comp
            if keep:
                saved.append((top, rest))
    if keep:
        return steps, saturated, saved
    return steps, saturated


def relaxed_topk(scores, k: int, t: float) -> RelaxedKHot:
    """Relaxed top-``k`` of a score vector at temperature ``t``."""
    s = _validate(scores, k, t)
    if s.ndim != 1:
        raise SubsetRelaxError("relaxed_topk expects a 1-D score vector; use relaxed_topk_batch")
    steps, saturated = successive_softmax(s, k, t)
    return RelaxedKHot(steps.sum(axis=0), steps, k, float(t), bool(saturated))


def relaxed_topk_batch(scores, k: int, t: float) -> np.ndarray:
    """Relaxed k-hot mass for each row of a ``(m, n)`` score matrix."""
    s = _validate(scores, k, t)
    steps, _ = successive_softmax(s, k, t)
    return steps.sum(axis=0)


def topk_mask(values, k: int) -> np.ndarray:
    """0/1 mask of the ``k`` largest entries along the last axis, ties to lower index."""
    values = np.asarray(values, dtype=np.float64)
    idx = np.argsort(-values, axis=-1, kind="stable")[..., :k]
    mask = np.zeros(values.shape, dtype=np.int8)
    np.put_along_axis(mask, idx, 1, axis=-1)
    return mask


def relaxed_topk_hard(scores, k: int, t: float) -> np.ndarray:
    """The k-hot mask picked by the largest entries of the relaxed mass."""
    return topk_mask(relaxed_topk(scores, k, t).mass, k)


def _scatter(active: np.ndarray, sub: RelaxedKHot, n: int) -> RelaxedKHot:
    mass = np.zeros(n)
    mass[active] = sub.mass
    steps = np.zeros((sub.k, n))
    steps[:, active] = sub.steps
    return RelaxedKHot(mass, steps, sub.k, sub.t, sub.saturated)


def relax_subset_sample(
    w, k: int, t: float, rng, relaxation: RelaxedTopK = relaxed_topk
) -> RelaxedKHot:
    """Relaxed subset sample: Gumbel keys fed to a relaxed top-k.

    Zero-weight items are left out of the relaxation and get zero mass.
    """
    w = as_weights(w)
    if k > w.n_positive:
        raise WeightsError(f"k={k} exceeds the number of positive weights ({w.n_positive})")
    keys = gumbel_keys(w, rng)
    active = keys.active
    if active.all():
        return relaxation(keys.values, k, t)
    return _scatter(active, relaxation(keys.values[active], k, t), w.n)


def relax_subset_sample_batch(w, k: int, t: float, count: int, rng) -> np.ndarray:
    """``count`` relaxed k-hot vectors, shape ``(count, n)``.

    Consumes the stream exactly as ``count`` calls of
    :func:`relax_subset_sample` would.
    """
    w = as_weights(w)
    if k > w.n_positive:
        raise WeightsError(f"k={k} exceeds the number of positive weights ({w.n_positive})")
    logw = log_weights(w)
    u = as_stream(rng).uniform((count, w.n))
    keys = gumbel_keys_from_uniforms(logw, u)
    active = np.isfinite(logw)
    mass = np.zeros((count, w.n))
    mass[:, active] = relaxed_topk_batch(keys[:, active], k, t)
    return mass

