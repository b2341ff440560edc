"""Hypergeometric contamination expectation and rank correlation tests.

Kendall's tau-b is computed with Knight's O(n log n) merge-sort algorithm.
P-values are exact for small tie-free samples (the permutation null is
enumerated by dynamic programming) and asymptotic otherwise: a tie-corrected
normal approximation for tau, a Student-t approximation for Spearman.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import ConfigError, DataError, DegenerateInputError

KENDALL_EXACT_MAX_N = 50
SPEARMAN_EXACT_MAX_N = 10


# --------------------------------------------------------------------------
# Contamination expectation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelCounts:
    """Inputs for one label: draws taken, DQE-origin items, population size."""

    label: str
    draws: int
    dqe_count: int
    total: int

    def validate(self) -> None:
        if min(self.draws, self.dqe_count, self.total) < 0:
            raise DataError(f"label {self.label!r}: counts must be nonnegative")
        if self.dqe_count > self.total:
            raise DataError(
                f"label {self.label!r}: DQE count {self.dqe_count} exceeds total {self.total}"
            )
        if self.draws > self.total:
            raise DataError(
                f"label {self.label!r}: {self.draws} draws exceed total {self.total}"
            )


@dataclass(frozen=True)
class LabelExpectation:
    label: str
    draws: int
    dqe_count: int
    total: int
    expected: float


@dataclass(frozen=True)
class DQEEstimate:
    per_label: tuple[LabelExpectation, ...]
    total_expected: float

    def to_dict(self) -> dict:
        return {
            "per_label": [dict(e.__dict__) for e in self.per_label],
            "total_expected": self.total_expected,
        }


def expected_dqe_samples(per_label: Sequence[LabelCounts]) -> DQEEstimate:
    """Hypergeometric mean ``draws * dqe_count / total`` per label, summed.

    Computed in exact rational arithmetic and converted once.
    """
    rows, total = [], Fraction(0)
    for lc in per_label:
        lc.validate()
        e = Fraction(lc.draws * lc.dqe_count, lc.total) if lc.total else Fraction(0)
        total += e
        rows.append(LabelExpectation(lc.label, lc.draws, lc.dqe_count, lc.total, float(e)))
    return DQEEstimate(tuple(rows), float(total))


def monte_carlo_dqe(
    per_label: Sequence[LabelCounts], trials: int, seed: int, return_samples: bool = False
):
    """Mean DQE-origin count in simulated draws without replacement.

    Each label's population has its ``dqe_count`` DQE items at positions
    ``0 .. dqe_count-1``; a draw takes the ``draws`` smallest of uniform
    random keys.  Every label gets its own child seed so the result does not
    depend on label order.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    for lc in per_label:
        lc.validate()
    children = np.random.SeedSequence(seed).spawn(len(per_label))
    counts = np.zeros(trials, dtype=np.int64)
    for lc, child in zip(per_label, children):
        rng = np.random.default_rng(child)
        if lc.draws == 0 or lc.dqe_count == 0:
            continue
        if lc.draws == lc.total or lc.dqe_count == lc.total:
            counts += lc.draws if lc.dqe_count == lc.total else lc.dqe_count
            continue
        chunk = max(1, 4_000_000 // lc.total)
        for start in range(0, trials, chunk):
            stop = min(trials, start + chunk)
            keys = rng.random((stop - start, lc.total))
            picked = np.argpartition(keys, lc.draws - 1, axis=1)[:, : lc.draws]
            counts[start:stop] += (picked < lc.dqe_count).sum(axis=1)
    mean = float(counts.mean())
    return (mean, counts) if return_samples else mean


# --------------------------------------------------------------------------
# Ranks
# --------------------------------------------------------------------------


def rank_with_ties(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DataError("cannot rank an empty sequence")
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(x.size)
    start = 0
    for end in range(1, x.size + 1):
        if end == x.size or sorted_x[end] != sorted_x[start]:
            ranks[order[start:end]] = 0.5 * (start + 1 + end)
            start = end
    return ranks


# --------------------------------------------------------------------------
# Correlations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float
    n: int
    method: str
    p_method: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _pair_arrays(x, y, min_n: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"x and y must be 1-D and equal length ({x.shape} vs {y.shape})")
    if x.size < min_n:
        raise DataError(f"need at least {min_n} pairs, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in correlation input")
    return x, y


def _tie_pairs(sorted_values: np.ndarray) -> tuple[int, int, int]:
    """Sums of t(t-1)/2, t(t-1)(t-2), t(t-1)(2t+5) over tie groups."""
    _, t = np.unique(sorted_values, return_counts=True)
    t = t.astype(np.int64)
    return (
        int(np.sum(t * (t - 1) // 2)),
        int(np.sum(t * (t - 1) * (t - 2))),
        int(np.sum(t * (t - 1) * (2 * t + 5))),
    )


def _count_swaps(a: list) -> int:
    """Inversions of ``a`` (strictly greater before smaller) by merge sort."""
    swaps = 0
    width = 1
    n = len(a)
    buf = list(a)
    while width < n:
        out = []
        for lo in range(0, n, 2 * width):
            mid, hi = min(lo + width, n), min(lo + 2 * width, n)
            i, j = lo, mid
            while i < mid and j < hi:
                if buf[j] < buf[i]:
                    out.append(buf[j])
                    swaps += mid - i
                    j += 1
                else:
                    out.append(buf[i])
                    i += 1
            out.extend(buf[i:mid])
            out.extend(buf[j:hi])
        buf = out
        width *= 2
    return swaps


def _kendall_statistic(x: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    """(S = C - D, n0, x-tied pairs, y-tied pairs) via Knight's algorithm."""
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)[0]
    # pairs tied in both x and y
    joint = 0
    start = 0
    for end in range(1, n + 1):
        if end == n or xs[end] != xs[start] or ys[end] != ys[start]:
            t = end - start
            joint += t * (t - 1) // 2
            start = end
    swaps = _count_swaps(ys.tolist())
    n2 = _tie_pairs(np.sort(ys))[0]
    s = n0 - n1 - n2 + joint - 2 * swaps
    return s, n0, n1, n2


@lru_cache(maxsize=None)
def _inversion_counts(n: int) -> tuple[int, ...]:
    """Number of permutations of n items with each inversion count."""
    counts = [1]
    for m in range(2, n + 1):
        new = [0] * (len(counts) + m - 1)
        for inv, c in enumerate(counts):
            for extra in range(m):
                new[inv + extra] += c
        counts = new
    return tuple(counts)


def _kendall_exact_p(s: int, n: int) -> float:
    counts = _inversion_counts(n)
    n0 = n * (n - 1) // 2
    # S = n0 - 2 * inversions
    extreme = sum(c for inv, c in enumerate(counts) if abs(n0 - 2 * inv) >= abs(s))
    return min(1.0, extreme / math.factorial(n))


def kendall_tau_b(x, y, method: str = "auto") -> CorrelationResult:
    """Kendall's tau-b with a two-sided p-value.

    ``method="auto"`` uses the exact permutation null for tie-free samples
    of at most 50 pairs and the tie-corrected normal approximation
    otherwise; ``"exact"`` and ``"asymptotic"`` force one route.
    """
    x, y = _pair_arrays(x, y, 2)
    n = x.size
    s, n0, n1, n2 = _kendall_statistic(x, y)
    if n1 == n0 or n2 == n0:
        raise DegenerateInputError("tau-b undefined: all values tied in x or y")
    tau = s / math.sqrt((n0 - n1) * (n0 - n2))
    tau = max(-1.0, min(1.0, tau))

    no_ties = n1 == 0 and n2 == 0
    if method == "auto":
        method = "exact" if no_ties and n <= KENDALL_EXACT_MAX_N else "asymptotic"
    if method == "exact":
        if not no_ties:
            raise DataError("exact Kendall p-value requires tie-free data")
        p = _kendall_exact_p(s, n)
    elif method == "asymptotic":
        x1, x2, x3 = _tie_pairs(np.sort(x))
        y1, y2, y3 = _tie_pairs(np.sort(y))
        var = (n * (n - 1) * (2 * n + 5) - x3 - y3) / 18.0
        var += (2 * x1) * (2 * y1) / (2.0 * n * (n - 1))
        if n > 2:
            var += x2 * y2 / (9.0 * n * (n - 1) * (n - 2))
        p = math.erfc(abs(s) / math.sqrt(2.0 * var)) if var > 0 else 1.0
    else:
        raise ConfigError(f"unknown p-value method {method!r}")
    return CorrelationResult(tau, min(1.0, p), n, "kendall_tau_b", method)


@lru_cache(maxsize=None)
def _rank_distance_counts(n: int) -> tuple[int, ...]:
    """Permutation counts by sum of squared rank differences.

    Dynamic programming over the set of ranks already placed: position
    ``popcount(mask)`` receives each unused rank in turn.
    """
    top = n * (n * n - 1) // 3
    table = np.zeros((1 << n, top + 1), dtype=np.int64)
    table[0, 0] = 1
    for mask in range(1 << n):
        row = table[mask]
        if not row.any():
            continue
        pos = bin(mask).count("1")
        for r in range(n):
            if mask & (1 << r):
                continue
            d2 = (pos - r) ** 2
            table[mask | (1 << r), d2:] += row[: top + 1 - d2]
    return tuple(int(c) for c in table[(1 << n) - 1])


def _spearman_exact_p(rho: float, n: int) -> float:
    counts = _rank_distance_counts(n)
    denom = n * (n * n - 1)
    total = math.factorial(n)
    extreme = 0
    for d, c in enumerate(counts):
        if c and abs(1.0 - 6.0 * d / denom) >= abs(rho) - 1e-12:
            extreme += c
    return min(1.0, extreme / total)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    return float(np.dot(da, db) / math.sqrt(np.dot(da, da) * np.dot(db, db)))


def spearman_rho(x, y, method: str = "auto") -> CorrelationResult:
    """Spearman's rho (Pearson on average ranks) with a two-sided p-value.

    ``method="auto"`` uses the exact permutation null for tie-free samples
    of at most 10 pairs, otherwise the Student-t approximation with n-2
    degrees of freedom (``p = 0`` when ``|rho| = 1``).
    """
    x, y = _pair_arrays(x, y, 2)
    n = x.size
    rx, ry = rank_with_ties(x), rank_with_ties(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise DegenerateInputError("Spearman rho undefined: zero rank variance")
    rho = max(-1.0, min(1.0, _pearson(rx, ry)))

    no_ties = np.unique(x).size == n and np.unique(y).size == n
    if method == "auto":
        method = "exact" if no_ties and n <= SPEARMAN_EXACT_MAX_N else "asymptotic"
    if method == "exact":
        if not no_ties:
            raise DataError("exact Spearman p-value requires tie-free data")
        if n > 12:
            raise ConfigError("exact Spearman p-value is limited to n <= 12")
        p = _spearman_exact_p(rho, n)
    elif method == "asymptotic":
        if n < 3:
            raise DataError("Student-t p-value needs at least 3 pairs")
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            df = n - 2
            t2 = rho * rho * df / (1.0 - rho * rho)
            p = float(betainc(0.5 * df, 0.5, df / (df + t2)))
    else:
        raise ConfigError(f"unknown p-value method {method!r}")
    return CorrelationResult(rho, min(1.0, max(0.0, p)), n, "spearman", method)
