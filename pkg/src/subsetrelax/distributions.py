"""Exact probabilities for weighted sampling without replacement.

An ordered sample ``(i_1, ..., i_k)`` drawn without replacement with
probabilities proportional to item weights has probability

    w[i_1]/Z * w[i_2]/(Z - w[i_1]) * ... * w[i_k]/(Z - w[i_1] - ... - w[i_{k-1}])

and an unordered subset has the sum of that quantity over all orderings
of its members. Everything here is brute force on purpose: these
functions are the ground truth the samplers are tested against.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EnumerationLimitError, SubsetRelaxError, WeightsError

#: Refuse to enumerate more than this many ordered sequences.
ENUMERATION_LIMIT = 10**7

_LOG_SPACE_THRESHOLD = 1e-300


@dataclass(frozen=True)
class Weights:
    """Validated nonnegative item weights.

    ``values`` is stored as a read-only float64 array. At least one weight
    must be strictly positive so the normalizer is nonzero.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0:
            raise WeightsError("weights must contain at least one item")
        if not np.all(np.isfinite(arr)):
            raise WeightsError("weights must be finite")
        if np.any(arr < 0):
            raise WeightsError("weights must be nonnegative")
        if not np.any(arr > 0):
            raise WeightsError("at least one weight must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return math.fsum(self.values)

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.values > 0))

    def scaled(self, c: float) -> "Weights":
        return Weights(self.values * c)


def as_weights(w) -> Weights:
    return w if isinstance(w, Weights) else Weights(w)


def _check_indices(s: Sequence[int], n: int) -> tuple[int, ...]:
    idx = tuple(int(i) for i in s)
    if len(idx) > n:
        raise SubsetRelaxError(f"sample length {len(idx)} exceeds number of items {n}")
    for i in idx:
        if i < 0 or i >= n:
            raise SubsetRelaxError(f"index {i} out of range for {n} items")
    if len(set(idx)) != len(idx):
        raise SubsetRelaxError(f"sample indices must be distinct: {idx}")
    return idx


def _sequence_probability(values: np.ndarray, idx: tuple[int, ...]) -> float:
    remaining = np.ones(values.size, dtype=bool)
    factors = []
    for i in idx:
        wi = values[i]
        if wi == 0.0:
            return 0.0
        denom = math.fsum(values[remaining])
        factors.append(wi / denom)
        remaining[i] = False
    if not factors:
        return 1.0
    if min(factors) < _LOG_SPACE_THRESHOLD:
        return math.exp(math.fsum(math.log(f) for f in factors))
    return math.prod(factors)


def sequence_probability(w, s: Sequence[int]) -> float:
    """Probability of drawing the ordered indices ``s`` without replacement.

    >>> sequence_probability([0.1, 0.2, 0.3, 0.4], (3, 2))
    0.2
    """
    w = as_weights(w)
    idx = _check_indices(s, w.n)
    return _sequence_probability(w.values, idx)


def mask_to_indices(mask) -> tuple[int, ...]:
    bits = np.asarray(mask).reshape(-1)
    if not np.all((bits == 0) | (bits == 1)):
        raise SubsetRelaxError("subset mask entries must be 0 or 1")
    return tuple(int(i) for i in np.flatnonzero(bits))


def indices_to_mask(indices: Iterable[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=np.int8)
    mask[list(indices)] = 1
    return mask


def subset_probability(w, mask) -> float:
    """Probability of the unordered subset encoded by the 0/1 ``mask``.

    Sums :func:`sequence_probability` over every ordering of the subset.
    """
    w = as_weights(w)
    bits = np.asarray(mask).reshape(-1)
    if bits.size != w.n:
        raise SubsetRelaxError(f"mask length {bits.size} does not match {w.n} weights")
    members = mask_to_indices(bits)
    if math.factorial(len(members)) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"{len(members)}! orderings exceed the enumeration limit {ENUMERATION_LIMIT}"
        )
    return _subset_probability(w.values, members)


def _subset_probability(values: np.ndarray, members: tuple[int, ...]) -> float:
    return math.fsum(
        _sequence_probability(values, perm) for perm in itertools.permutations(members)
    )


def subset_key(indices: Iterable[int]) -> str:
    """Canonical string form of a subset: sorted indices joined by ``-``."""
    return "-".join(str(i) for i in sorted(indices))


def parse_subset_key(key: str) -> tuple[int, ...]:
    return tuple(int(p) for p in key.split("-")) if key else ()


@dataclass(frozen=True)
class SubsetDistribution:
    """Probability table over all k-subsets of ``n`` items.

    Keys are sorted index tuples in lexicographic order.
    """

    n: int
    k: int
    probs: Mapping[tuple[int, ...], float] = field(repr=False)

    def __getitem__(self, subset) -> float:
        return self.probs[tuple(sorted(subset))]

    def __iter__(self):
        return iter(self.probs)

    def __len__(self):
        return len(self.probs)

    def items(self):
        return self.probs.items()

    def vector(self) -> np.ndarray:
        return np.fromiter(self.probs.values(), dtype=np.float64, count=len(self.probs))

    def to_dict(self) -> dict[str, float]:
        return {subset_key(s): p for s, p in self.probs.items()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "probability"])
        for s, p in self.probs.items():
            writer.writerow([subset_key(s), repr(p)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, n: int, k: int, table: Mapping[str, float]) -> "SubsetDistribution":
        probs = {parse_subset_key(key): float(p) for key, p in table.items()}
        return cls(n, k, dict(sorted(probs.items())))

    @classmethod
    def from_csv(cls, n: int, k: int, text: str) -> "SubsetDistribution":
        rows = csv.DictReader(io.StringIO(text))
        return cls.from_dict(n, k, {r["subset"]: float(r["probability"]) for r in rows})


def enumeration_size(n: int, k: int) -> int:
    return math.comb(n, k) * math.factorial(k)


def enumerate_subset_distribution(w, k: int) -> SubsetDistribution:
    """Exact probability of every k-subset, by enumerating all orderings."""
    w = as_weights(w)
    if k < 0 or k > w.n:
        raise SubsetRelaxError(f"subset size k={k} must be in [0, {w.n}]")
    if k > w.n_positive:
        raise WeightsError(f"k={k} exceeds the number of positive weights ({w.n_positive})")
    size = enumeration_size(w.n, k)
    if size > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"C({w.n},{k})*{k}! = {size} orderings exceed the enumeration limit {ENUMERATION_LIMIT}"
        )
    probs = {
        combo: _subset_probability(w.values, combo)
        for combo in itertools.combinations(range(w.n), k)
    }
    return SubsetDistribution(w.n, k, probs)
