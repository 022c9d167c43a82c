"""Compare sampler output against exact subset distributions."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import stats as _st

from .distributions import SubsetDistribution, subset_key
from .errors import SubsetRelaxError


@dataclass
class EmpiricalDistribution:
    """Counts of observed k-subsets, keyed by sorted index tuple."""

    n: int
    k: int
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, subset: Iterable[int], count: int = 1):
        key = tuple(sorted(int(i) for i in subset))
        if len(key) != self.k or len(set(key)) != self.k:
            raise SubsetRelaxError(f"{key} is not a {self.k}-subset")
        if key and (key[0] < 0 or key[-1] >= self.n):
            raise SubsetRelaxError(f"{key} has indices outside 0..{self.n - 1}")
        self.counts[key] += count

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        _check_shape(self, other)
        return EmpiricalDistribution(self.n, self.k, self.counts + other.counts)

    def frequency(self, subset) -> float:
        total = self.total
        return self.counts.get(tuple(sorted(subset)), 0) / total if total else 0.0

    @classmethod
    def from_samples(cls, n: int, k: int, samples) -> "EmpiricalDistribution":
        """Build from an ``(m, k)`` array of sampled indices (order ignored)."""
        arr = np.sort(np.asarray(samples, dtype=np.int64).reshape(-1, k), axis=1)
        dist = cls(n, k)
        if arr.size:
            rows, cnt = np.unique(arr, axis=0, return_counts=True)
            for row, c in zip(rows, cnt):
                dist.add(row, int(c))
        return dist

    @classmethod
    def from_masks(cls, masks) -> "EmpiricalDistribution":
        masks = np.asarray(masks)
        k = int(masks[0].sum())
        idx = np.argsort(-masks, axis=1, kind="stable")[:, :k]
        return cls.from_samples(masks.shape[1], k, idx)


def _check_shape(p, q):
    if p.n != q.n or p.k != q.k:
        raise SubsetRelaxError(f"mismatched support: n={p.n},k={p.k} vs n={q.n},k={q.k}")


def _as_probs(q) -> Mapping[tuple, float]:
    if isinstance(q, EmpiricalDistribution):
        total = q.total
        if total == 0:
            raise SubsetRelaxError("empirical distribution has no samples")
        return {s: c / total for s, c in q.counts.items()}
    return q.probs


def total_variation(p: SubsetDistribution, q) -> float:
    """Half the L1 distance; subsets missing from either side count as 0."""
    _check_shape(p, q)
    pp, qq = _as_probs(p), _as_probs(q)
    keys = set(pp) | set(qq)
    return 0.5 * math.fsum(abs(pp.get(s, 0.0) - qq.get(s, 0.0)) for s in keys)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    pvalue: float
    dof: int
    cells: int


def merge_cells(observed, expected, min_expected: float = 5.0):
    """Merge the two smallest-expected cells until every cell reaches ``min_expected``."""
    cells = sorted(zip(expected, observed), key=lambda c: c[0])
    while len(cells) > 1 and cells[0][0] < min_expected:
        (e0, o0), (e1, o1) = cells[0], cells[1]
        cells = sorted([(e0 + e1, o0 + o1)] + cells[2:], key=lambda c: c[0])
    exp = np.array([c[0] for c in cells], dtype=np.float64)
    obs = np.array([c[1] for c in cells], dtype=np.float64)
    return obs, exp


def chi_square_gof(p: SubsetDistribution, q: EmpiricalDistribution) -> ChiSquareResult:
    """Pearson goodness of fit of observed subset counts to ``p``."""
    _check_shape(p, q)
    total = q.total
    if total == 0:
        raise SubsetRelaxError("empirical distribution has no samples")
    extra = set(q.counts) - set(p.probs)
    if extra:
        raise SubsetRelaxError(f"observed subsets outside the reference table: {sorted(extra)}")
    observed = [q.counts.get(s, 0) for s in p.probs]
    expected = [pr * total for pr in p.probs.values()]
    obs, exp = merge_cells(observed, expected)
    if obs.size < 2:
        raise SubsetRelaxError("chi-square test needs at least two cells after merging")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return ChiSquareResult(stat, float(_st.chi2.sf(stat, dof)), dof, int(obs.size))


def chi_square_counts(observed, probs) -> ChiSquareResult:
    """Same test for plain category counts (e.g. single-item marginals)."""
    observed = np.asarray(observed, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    total = observed.sum()
    obs, exp = merge_cells(observed.tolist(), (probs / probs.sum() * total).tolist())
    if obs.size < 2:
        raise SubsetRelaxError("chi-square test needs at least two cells after merging")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return ChiSquareResult(stat, float(_st.chi2.sf(stat, dof)), dof, int(obs.size))


def binomial_ci(count: int, total: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0 or count < 0 or count > total:
        raise SubsetRelaxError(f"invalid counts: {count} of {total}")
    if not 0 < level < 1:
        raise SubsetRelaxError(f"confidence level must be in (0, 1), got {level}")
    z = _st.norm.ppf(0.5 + level / 2)
    phat = count / total
    denom = 1 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total))
    lo = 0.0 if count == 0 else max(0.0, center - half)
    hi = 1.0 if count == total else min(1.0, center + half)
    return lo, hi


def comparison_rows(p: SubsetDistribution, q: EmpiricalDistribution, level: float = 0.95):
    """Per-subset rows of (subset key, exact, empirical, ci_lo, ci_hi)."""
    total = q.total
    rows = []
    for s, prob in p.probs.items():
        c = q.counts.get(s, 0)
        lo, hi = binomial_ci(c, total, level)
        rows.append((subset_key(s), prob, c / total, lo, hi))
    return rows
