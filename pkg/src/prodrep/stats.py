"""Configuration statistics: counts, proportion vectors/matrices and the
membership tests the mixing analysis is phrased in.

Threshold comparisons against squared Euclidean distances are done in exact
rational arithmetic (integer numerators over n^2 Q^2) so boundary cases
never flip due to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyRow, LengthMismatch, RowSumMismatch
from .groups import FiniteGroup, Subgroup


@dataclass(frozen=True)
class PairCounts:
    """Joint counts n[a, b] of (reference value a, current value b) pairs.

    Rows sum to the reference configuration's value counts; the total is n.
    """

    row_sums: tuple[int, ...]
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(sum(self.row_sums))

    def check(self) -> None:
        got = tuple(int(v) for v in self.counts.sum(axis=1))
        if got != tuple(self.row_sums):
            raise RowSumMismatch(f"row sums {got} != {tuple(self.row_sums)}")


def value_counts(config) -> np.ndarray:
    """n_a = number of sites holding element a."""
    return np.bincount(config.sites, minlength=config.group.order).astype(np.int64)


def proportion_vector(config) -> np.ndarray:
    return value_counts(config) / config.n


def proportion_matrix(ref, config) -> PairCounts:
    """Joint counts of (ref value, current value) over sites."""
    if ref.group is not config.group and ref.group.name != config.group.name:
        raise LengthMismatch("configurations belong to different groups")
    if ref.n != config.n:
        raise LengthMismatch(f"lengths differ: {ref.n} != {config.n}")
    q = ref.group.order
    flat = ref.sites * q + config.sites
    counts = np.bincount(flat, minlength=q * q).reshape(q, q).astype(np.int64)
    return PairCounts(tuple(int(v) for v in counts.sum(axis=1)), counts)


def subgroup_escape_count(config, subgroup: Subgroup) -> int:
    """Number of sites holding an element outside the subgroup."""
    counts = value_counts(config)
    return int(sum(c for a, c in enumerate(counts) if not subgroup.contains(a)))


def avoids_subgroup_confinement(config, min_fraction) -> bool:
    """True iff every proper subgroup misses at least min_fraction of sites."""
    counts = value_counts(config)
    n = config.n
    thr = Fraction(min_fraction) * n
    for sub in config.group.proper_subgroups:
        outside = sum(int(c) for a, c in enumerate(counts) if not sub.contains(a))
        if outside < thr:
            return False
    return True


def _sq_dist_to_uniform_num(counts: np.ndarray, total: int, q: int) -> int:
    """Integer numerator of ||counts/total - 1/q||^2 over denominator (total*q)^2."""
    return int(sum((q * int(c) - total) ** 2 for c in counts))


def near_uniform(config, tol) -> bool:
    """True iff the proportion vector is within tol of uniform in l2."""
    q = config.group.order
    n = config.n
    num = _sq_dist_to_uniform_num(value_counts(config), n, q)
    return Fraction(num, (n * q) ** 2) <= Fraction(tol) ** 2


def rows_near_uniform(ref, config, tol) -> bool:
    """True iff every row of the pair-count proportion matrix is within tol
    of the uniform row in l2. Requires every reference value class nonempty."""
    pc = proportion_matrix(ref, config)
    return pair_counts_rows_near_uniform(pc, tol)


def pair_counts_rows_near_uniform(pc: PairCounts, tol) -> bool:
    q = pc.counts.shape[0]
    tol2 = Fraction(tol) ** 2
    for a, row_sum in enumerate(pc.row_sums):
        if row_sum == 0:
            raise EmptyRow(f"reference has no sites with value {a}")
        num = _sq_dist_to_uniform_num(pc.counts[a], row_sum, q)
        if Fraction(num, (row_sum * q) ** 2) > tol2:
            return False
    return True


def half_l1_distance(m1: PairCounts, m2: PairCounts) -> int:
    """Half the l1 distance between pair-count matrices with equal row sums.

    Always an integer for integer matrices sharing row sums.
    """
    if tuple(m1.row_sums) != tuple(m2.row_sums):
        raise RowSumMismatch(f"{m1.row_sums} != {m2.row_sums}")
    total = int(np.abs(m1.counts - m2.counts).sum())
    if total % 2 != 0:
        raise RowSumMismatch("odd l1 distance; matrices cannot share row sums")
    return total // 2
