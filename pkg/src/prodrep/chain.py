"""The product replacement chain on generating tuples.

A state is a length-n tuple of group elements whose values generate the
group. One step picks an ordered pair of distinct sites (i, j) and a fair
sign s, then replaces site i's value v_i by v_i * v_j or v_i * v_j^{-1}.

Besides site-level stepping this module provides the projected dynamics on
value counts and on pair counts (joint counts against a fixed reference
configuration), which are Markov by permutation symmetry and are what the
heavy experiments actually simulate.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NTooSmall, RejectionBudgetExceeded
from .groups import FiniteGroup, generates, minimal_generating_set
from .stats import PairCounts, value_counts


class Configuration:
    """A state of the chain: group reference plus an array of site values."""

    __slots__ = ("group", "sites")

    def __init__(self, group: FiniteGroup, sites, check: bool = True):
        self.group = group
        self.sites = np.asarray(sites, dtype=np.int64)
        if self.sites.ndim != 1 or len(self.sites) < 2:
            raise ValueError("need at least two sites")
        if check and not generates(group, set(int(v) for v in self.sites)):
            raise ValueError("site values do not generate the group")

    @property
    def n(self) -> int:
        return len(self.sites)

    def copy(self) -> "Configuration":
        return Configuration(self.group, self.sites.copy(), check=False)

    def __repr__(self):
        return f"Configuration({self.group.name}, {self.sites.tolist()})"


def sample_move(n: int, rng) -> tuple[int, int, int]:
    """Uniform ordered pair of distinct sites plus a fair sign."""
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    s = 1 if rng.integers(2) else -1
    return i, j, s


def apply_move(config: Configuration, i: int, j: int, s: int) -> None:
    g = config.group
    vj = config.sites[j] if s == 1 else g.inv[config.sites[j]]
    config.sites[i] = g.mult[config.sites[i], vj]


def step(config: Configuration, rng) -> Configuration:
    """One transition; returns a new configuration."""
    out = config.copy()
    i, j, s = sample_move(config.n, rng)
    apply_move(out, i, j, s)
    return out


def run_trajectory(config: Configuration, steps: int, rng, observer=None,
                   observe_every: int = 1) -> Configuration:
    """Advance ``steps`` transitions in place on a copy.

    ``observer(t, config)`` is invoked at t=0 and then every
    ``observe_every`` steps, so statistics can be accumulated without
    storing the path.
    """
    cur = config.copy()
    if observer is not None:
        observer(0, cur)
    for t in range(1, steps + 1):
        i, j, s = sample_move(cur.n, rng)
        apply_move(cur, i, j, s)
        if observer is not None and t % observe_every == 0:
            observer(t, cur)
    return cur


def one_step_distribution(config: Configuration) -> dict[tuple, Fraction]:
    """Exact law of the next state: each of the 2n(n-1) moves has equal mass."""
    n = config.n
    p = Fraction(1, 2 * n * (n - 1))
    out: dict[tuple, Fraction] = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for s in (1, -1):
                nxt = config.copy()
                apply_move(nxt, i, j, s)
                key = tuple(int(v) for v in nxt.sites)
                out[key] = out.get(key, Fraction(0)) + p
    return out


@dataclass(frozen=True)
class IncrementCheck:
    """Exact expected one-step change of every value count, computed two ways."""

    closed_form: tuple[Fraction, ...]
    brute_force: tuple[Fraction, ...]

    @property
    def max_discrepancy(self) -> float:
        return max(abs(float(a - b)) for a, b in zip(self.closed_form, self.brute_force))


def expected_increment(config: Configuration) -> IncrementCheck:
    """E[change of n_a | current state] for every a, both as the closed-form
    count expression and as the average over all 2n(n-1) moves.

    The closed form excludes the i=j diagonal of the pair sums, which is what
    makes it exact rather than accurate to O(1/n); the two routes agree
    identically and serve as this module's self-oracle.
    """
    g = config.group
    q = g.order
    n = config.n
    counts = [int(c) for c in value_counts(config)]
    denom = 2 * n * (n - 1)

    closed = []
    for a in range(q):
        creations = 0
        for b in range(q):
            creations += counts[g.mul(a, g.inverse(b))] * counts[b]  # s = +1
            creations += counts[g.mul(a, b)] * counts[b]             # s = -1
        # remove i=j contributions: v*v = a for s=+1, v*v^{-1} = id for s=-1
        creations -= sum(counts[b] for b in range(q) if g.mul(b, b) == a)
        if a == g.identity:
            creations -= n
        closed.append(Fraction(creations, denom) - Fraction(counts[a], n))

    brute = [Fraction(0)] * q
    sites = config.sites
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for s in (1, -1):
                vj = sites[j] if s == 1 else g.inv[sites[j]]
                new = g.mult[sites[i], vj]
                brute[int(new)] += Fraction(1, denom)
                brute[int(sites[i])] -= Fraction(1, denom)
    return IncrementCheck(tuple(closed), tuple(brute))


def worst_case_start(group: FiniteGroup, n: int) -> Configuration:
    """Minimal generating set at the first sites, identity everywhere else.

    This is the slowest-mixing start used by the lower-bound experiments.
    """
    gens = minimal_generating_set(group)
    if n < max(len(gens), 2):
        raise NTooSmall(f"need n >= {len(gens)} sites for {group.name}")
    sites = np.zeros(n, dtype=np.int64)
    sites[: len(gens)] = gens
    return Configuration(group, sites)


@dataclass
class RejectionStats:
    draws: int = 0
    accepted: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.draws if self.draws else float("nan")


def sample_stationary(group: FiniteGroup, n: int, rng, budget: int = 100_000,
                      stats: RejectionStats | None = None) -> Configuration:
    """Exact stationary draw: uniform over tuples, rejected until generating."""
    for _ in range(budget):
        sites = rng.integers(0, group.order, size=n)
        if stats is not None:
            stats.draws += 1
        if generates(group, set(int(v) for v in np.unique(sites))):
            if stats is not None:
                stats.accepted += 1
            return Configuration(group, sites, check=False)
    raise RejectionBudgetExceeded(f"no generating tuple in {budget} draws")


def sample_stationary_pair_counts(group: FiniteGroup, row_sums, rng,
                                  budget: int = 100_000) -> PairCounts:
    """Stationary law of the pair-count matrix against a reference with the
    given value counts: independent uniform multinomial rows, conditioned on
    the column support generating the group."""
    q = group.order
    probs = np.full(q, 1.0 / q)
    for _ in range(budget):
        counts = np.stack([rng.multinomial(rs, probs) for rs in row_sums])
        support = [b for b in range(q) if counts[:, b].sum() > 0]
        if generates(group, support):
            return PairCounts(tuple(int(r) for r in row_sums), counts.astype(np.int64))
    raise RejectionBudgetExceeded(f"no generating support in {budget} draws")


# ---------------------------------------------------------------------------
# projected count chains (vectorized over replicas)


class CountChainBatch:
    """Batch of independent copies of the pair-count chain.

    State per replica is an integer (rows, Q) matrix with fixed row sums; a
    value-count chain is the single-row special case. One call to ``step``
    advances every replica by one transition using integer-exact sampling.
    """

    def __init__(self, group: FiniteGroup, start_counts: np.ndarray, replicas: int, rng):
        self.group = group
        start = np.asarray(start_counts, dtype=np.int64)
        if start.ndim == 1:
            start = start[None, :]
        self.rows, self.q = start.shape
        self.n = int(start.sum())
        self.counts = np.repeat(start[None, :, :], replicas, axis=0).copy()
        self.flat = self.counts.reshape(replicas, self.rows * self.q)
        self.replicas = replicas
        self.rng = rng
        self._mult = group.mult
        self._inv = group.inv
        self._ar = np.arange(replicas)

    def step(self, mask=None) -> None:
        """One transition per replica; ``mask`` freezes finished replicas."""
        flat, rng, n = self.flat, self.rng, self.n
        cum = np.cumsum(flat, axis=1)
        src = (cum <= rng.integers(0, n, size=self.replicas)[:, None]).sum(axis=1)
        flat[self._ar, src] -= 1
        cum2 = np.cumsum(flat, axis=1)
        par = (cum2 <= rng.integers(0, n - 1, size=self.replicas)[:, None]).sum(axis=1)
        flat[self._ar, src] += 1
        plus = rng.integers(0, 2, size=self.replicas).astype(bool)
        b = src % self.q
        d = par % self.q
        dmod = np.where(plus, d, self._inv[d])
        nb = self._mult[b, dmod]
        row = src // self.q
        dst = row * self.q + nb
        if mask is None:
            flat[self._ar, src] -= 1
            flat[self._ar, dst] += 1
        else:
            act = self._ar[mask]
            flat[act, src[mask]] -= 1
            flat[act, dst[mask]] += 1

    def value_counts(self) -> np.ndarray:
        """Column sums: the value-count vector of each replica, (B, Q)."""
        return self.counts.sum(axis=1)
