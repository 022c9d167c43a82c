"""Exact samplers for weighted sampling without replacement.

Two key constructions select the same items when fed the same uniform
draws ``u``:

* reservoir keys ``u ** (1 / w)`` (weighted reservoir sampling), and
* Gumbel keys ``-log(-log(u)) + log(w)``.

The second is a monotone transform of the first, which is what makes
the relaxation in :mod:`subsetrelax.relaxation` sample the right subset
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Weights, as_weights
from .errors import SubsetRelaxError, WeightsError

UNIFORM_EPS = 1e-12


class UniformStream:
    """Seedable source of uniform draws in ``[eps, 1 - eps]``.

    Backed by numpy's PCG64 bit generator, which yields the same stream on
    every platform for a given seed. Draw order is row-major: a request
    for shape ``(m, n)`` consumes the same values as ``m`` successive
    requests of ``n`` draws, one per item in ascending index order.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, shape) -> np.ndarray:
        u = self._gen.random(shape)
        return np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)

    def spawn(self, n: int) -> list["UniformStream"]:
        """Independent child streams derived deterministically from the seed."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [UniformStream(int(c.generate_state(1, np.uint64)[0])) for c in children]

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self):
        return f"UniformStream(seed={self.seed})"


def as_stream(rng) -> UniformStream:
    if isinstance(rng, UniformStream):
        return rng
    if rng is None:
        raise SubsetRelaxError("an explicit seed or UniformStream is required")
    return UniformStream(int(rng))


@dataclass(frozen=True)
class GumbelKeys:
    """Perturbed log-weights, one per item.

    Items with zero weight carry ``-inf``: they order below every finite
    key and are never selected. ``log(0)`` is never evaluated.
    """

    values: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass(frozen=True)
class ReservoirKeys:
    """Reservoir keys ``u ** (1/w)`` and their logs ``log(u) / w``.

    For small weights ``u ** (1/w)`` underflows to 0 and would tie with
    zero-weight items, so ranking uses ``log_values``, which orders items
    identically and stays finite. Zero-weight items carry ``-inf`` there.
    """

    values: np.ndarray
    log_values: np.ndarray


def gumbel_keys_from_uniforms(log_w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Gumbel keys from log-weights and matching uniforms (any leading shape)."""
    log_w = np.asarray(log_w, dtype=np.float64)
    noise = -np.log(-np.log(u))
    return np.where(np.isneginf(log_w), -np.inf, noise + log_w)


def log_weights(w: Weights) -> np.ndarray:
    out = np.full(w.n, -np.inf)
    pos = w.values > 0
    out[pos] = np.log(w.values[pos])
    return out


def gumbel_keys(w, rng) -> GumbelKeys:
    """Draw one Gumbel key per item, consuming ``n`` uniforms."""
    w = as_weights(w)
    u = as_stream(rng).uniform(w.n)
    return GumbelKeys(gumbel_keys_from_uniforms(log_weights(w), u))


def reservoir_keys_from_uniforms(values: np.ndarray, u: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    pos = values > 0
    out = np.zeros(np.broadcast(values, u).shape)
    with np.errstate(divide="ignore"):
        inv = np.where(pos, 1.0 / np.where(pos, values, 1.0), 0.0)
    np.power(u, inv, out=out, where=np.broadcast_to(pos, out.shape))
    return out


def reservoir_log_keys_from_uniforms(values: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``log(u) / w``, or ``-inf`` where ``w == 0``."""
    values = np.asarray(values, dtype=np.float64)
    pos = values > 0
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(u) / np.where(pos, values, 1.0)
    return np.where(pos, out, -np.inf)


def reservoir_keys(w, rng) -> ReservoirKeys:
    w = as_weights(w)
    u = as_stream(rng).uniform(w.n)
    return ReservoirKeys(reservoir_keys_from_uniforms(w.values, u),
                         reservoir_log_keys_from_uniforms(w.values, u))


def _key_array(keys) -> np.ndarray:
    if isinstance(keys, ReservoirKeys):
        keys = keys.log_values
    elif isinstance(keys, GumbelKeys):
        keys = keys.values
    return np.asarray(keys, dtype=np.float64)


def hard_topk(keys, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` largest keys in descending key order.

    Ties go to the lower index.
    """
    arr = _key_array(keys)
    if arr.ndim != 1:
        raise SubsetRelaxError("hard_topk expects a 1-D key vector")
    if k < 0 or k > arr.size:
        raise SubsetRelaxError(f"k={k} must be in [0, {arr.size}]")
    order = np.argsort(-arr, kind="stable")
    return tuple(int(i) for i in order[:k])


def hard_topk_batch(keys: np.ndarray, k: int) -> np.ndarray:
    """Row-wise :func:`hard_topk` for a ``(m, n)`` key matrix."""
    keys = np.asarray(keys, dtype=np.float64)
    if k < 0 or k > keys.shape[-1]:
        raise SubsetRelaxError(f"k={k} must be in [0, {keys.shape[-1]}]")
    return np.argsort(-keys, axis=-1, kind="stable")[..., :k]


def _check_k(w: Weights, k: int):
    if k < 1:
        raise SubsetRelaxError(f"k must be at least 1, got {k}")
    if k > w.n_positive:
        raise WeightsError(f"k={k} exceeds the number of positive weights ({w.n_positive})")


def wrs_sample(w, k: int, rng) -> tuple[int, ...]:
    """Weighted reservoir sample: top-``k`` of ``u ** (1/w)``, ordered.

    Keys are compared through their logs so tiny weights never underflow
    into a tie with zero-weight items.
    """
    w = as_weights(w)
    _check_k(w, k)
    return hard_topk(reservoir_keys(w, rng), k)


def wrs_sample_batch(w, k: int, count: int, rng) -> np.ndarray:
    w = as_weights(w)
    _check_k(w, k)
    u = as_stream(rng).uniform((count, w.n))
    return hard_topk_batch(reservoir_log_keys_from_uniforms(w.values, u), k)


def gumbel_topk_sample(w, k: int, rng) -> tuple[int, ...]:
    w = as_weights(w)
    _check_k(w, k)
    return hard_topk(gumbel_keys(w, rng), k)


def gumbel_topk_batch(w, k: int, count: int, rng) -> np.ndarray:
    """``count`` ordered samples from Gumbel top-k, shape ``(count, k)``."""
    w = as_weights(w)
    _check_k(w, k)
    u = as_stream(rng).uniform((count, w.n))
    return hard_topk_batch(gumbel_keys_from_uniforms(log_weights(w), u), k)


def key_equivalence_check(w, k: int, rng) -> bool:
    """Check that both key constructions pick the same items from one draw.

    The same ``n`` uniforms feed the reservoir keys and the Gumbel keys;
    the result is True iff the two top-``k`` index sequences match exactly.
    """
    w = as_weights(w)
    _check_k(w, k)
    u = as_stream(rng).uniform(w.n)
    r = reservoir_log_keys_from_uniforms(w.values, u)
    g = gumbel_keys_from_uniforms(log_weights(w), u)
    return hard_topk(r, k) == hard_topk(g, k)
