"""Birth-and-death comparison chain for the burn-in phase.

For a proper subgroup H, the number of sites outside H can only fail to
drop when the replaced site's product happens to escape H. Pretending every
such product falls inside H yields a birth-and-death chain on {1..n} whose
hitting times are exactly computable and which the true escape count
dominates pathwise; this module has the exact moment recursions, the
stationary law, and the domination experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DominationViolated, PreconditionViolated
from .groups import FiniteGroup, Subgroup
from .stats import value_counts


@dataclass(frozen=True)
class BDChain:
    """Transition rates: up k(n-k)/(n(n-1)), down k(k-1)/(n(n-1)), rest holds."""

    n: int

    def p_up(self, k: int) -> Fraction:
        n = self.n
        return Fraction(k * (n - k), n * (n - 1))

    def p_down(self, k: int) -> Fraction:
        n = self.n
        return Fraction(k * (k - 1), n * (n - 1))

    def p_hold(self, k: int) -> Fraction:
        return 1 - self.p_up(k) - self.p_down(k)

    def step(self, k: int, rng) -> int:
        u = rng.random()
        if u < float(self.p_up(k)):
            return k + 1
        if u < float(self.p_up(k) + self.p_down(k)):
            return k - 1
        return k


@dataclass(frozen=True)
class HittingMoments:
    """Exact upward hitting-time moments: entry k is the leg from k-1 to k."""

    n: int
    expectations: dict[int, Fraction | float]
    variances: dict[int, Fraction | float]

    def total_expectation(self):
        return sum(self.expectations.values())

    def total_variance(self):
        """Variance of the full passage 1 -> n/3; legs are independent."""
        return sum(self.variances.values())


def hitting_moments(n: int, k_max: int | None = None,
                    exact_limit: int = 200) -> HittingMoments:
    """First and second moments of upward hitting legs via first-step recursion.

    Exact rationals through n = exact_limit, floats beyond. Covers legs
    k-1 -> k for 2 <= k <= n//3 (unless k_max overrides).
    """
    if n < 9:
        raise PreconditionViolated("need n >= 9 for a nontrivial range")
    if k_max is None:
        k_max = n // 3
    chain = BDChain(n)
    exact = n <= exact_limit
    one = Fraction(1) if exact else 1.0

    def conv(x):
        return x if exact else float(x)

    expectations: dict[int, object] = {}
    variances: dict[int, object] = {}
    # S_j = E_j[time to hit j+1], M_j = second moment of that leg
    s_prev = m_prev = None
    for j in range(1, k_max):
        p = conv(chain.p_up(j))
        qd = conv(chain.p_down(j))
        h = conv(chain.p_hold(j))
        if j == 1:
            s = one / p
            m = (one * 2 - p) / (p * p)  # geometric(p): E T^2 = (2-p)/p^2
        else:
            s = (one + qd * s_prev) / p
            # T = 1 + xi; xi = 0 (up), T' (hold), T'_{j-1->j} + T''_{j->j+1} (down)
            e_xi = h * s + qd * (s_prev + s)
            m = (one + 2 * e_xi + qd * (m_prev + 2 * s_prev * s)) / p
        expectations[j + 1] = s
        variances[j + 1] = m - s * s
        s_prev, m_prev = s, m
    return HittingMoments(n, expectations, variances)


def bd_stationary(n: int) -> list[Fraction]:
    """pi(k) = C(n, k) / (2^n - 1) on 1..n, exact."""
    if n > 1000:
        raise PreconditionViolated("binomial table capped at n = 1000")
    denom = (1 << n) - 1
    return [Fraction(math.comb(n, k), denom) for k in range(1, n + 1)]


def detailed_balance_residuals(n: int) -> list[Fraction]:
    """pi(k) p_up(k) - pi(k+1) p_down(k+1) for k = 1..n-1; all zero exactly."""
    chain = BDChain(n)
    pi = bd_stationary(n)
    return [pi[k - 1] * chain.p_up(k) - pi[k] * chain.p_down(k + 1)
            for k in range(1, n)]


def escape_probability_experiment(n: int, start: int, target: int, t_max: int,
                                  replicas: int, rng) -> dict:
    """Empirical Pr_start(T_target <= t_max) for a downward target, reported
    against the stationary-ratio bound t_max * pi(target)/pi(start)."""
    pi = bd_stationary(n)
    bound = float(t_max * pi[target - 1] / pi[start - 1])
    chain = BDChain(n)
    hits = 0
    for _ in range(replicas):
        k = start
        for _ in range(t_max):
            k = chain.step(k, rng)
            if k <= target:
                hits += 1
                break
    phat = hits / replicas
    half = _wilson_upper(hits, replicas, 2.576) - phat
    return {"estimate": phat, "upper99": phat + half, "bound": bound,
            "violated": phat + half > bound and bound < 1.0}


def _wilson_upper(successes: int, trials: int, z: float) -> float:
    if trials == 0:
        return 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = p + z * z / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return min(1.0, (center + half) / denom)


# ---------------------------------------------------------------------------
# domination experiment


@dataclass
class DominationReport:
    steps: int
    strict_gap_steps: int
    final_gap: int
    violations: int


def domination_check(group: FiniteGroup, subgroup: Subgroup, config, steps: int,
                     rng) -> DominationReport:
    """Run the site chain jointly with the pessimistic comparison counter and
    assert the counter never exceeds the true escape count.

    Both processes are driven by one shared uniform per step, laid out so
    that the counter moves down exactly on the moves where the true count
    could move down (both chosen sites outside H), moves up only when the
    up-probabilities allow it, and otherwise holds. Marginally the counter
    is the birth-and-death chain; pathwise it stays below the escape count.
    """
    g = group
    q = g.order
    outside = np.array([0 if subgroup.contains(a) else 1 for a in range(q)], bool)
    counts = value_counts(config).astype(np.int64)
    n = int(counts.sum())
    k = int(counts[outside].sum())
    if k == 0:
        raise PreconditionViolated("start must have sites outside the subgroup")
    bd = BDChain(n)
    comparison = k
    strict = 0
    violations = 0

    # products and their subgroup membership, tabulated once
    in_h = ~outside
    for t in range(steps):
        big_k = int(counts[outside].sum())
        # category masses for the site chain, from value counts alone
        up_w = 0      # i inside H, j outside
        dn_w = 0      # i, j outside, product lands inside (averaged over sign)
        esc_w = 0     # i, j outside, product stays outside
        for a in range(q):
            ca = int(counts[a])
            if ca == 0:
                continue
            for b in range(q):
                w = ca * (int(counts[b]) - (1 if a == b else 0))
                if w <= 0:
                    continue
                if not outside[b]:
                    continue  # j inside H: hold for both processes
                if not outside[a]:
                    up_w += 2 * w
                else:
                    for prod in (g.mult[a, b], g.mult[a, g.inv[b]]):
                        if in_h[prod]:
                            dn_w += w
                        else:
                            esc_w += w
        denom = 2 * n * (n - 1)
        u = rng.random()
        # site-chain layout: [up | hold(j in H) | escape-hold | down]
        up_p = up_w / denom
        dn_p = dn_w / denom
        esc_p = esc_w / denom
        # comparison layout: [up | hold | down]; when the two counts agree the
        # regions must coincide bit-for-bit, so reuse the site-chain floats
        if comparison == big_k:
            c_up = up_p
            c_dn = dn_p + esc_p
        else:
            c_up = float(bd.p_up(comparison))
            c_dn = float(bd.p_down(comparison))

        # advance the site chain by a move sampled inside the chosen category
        if u < up_p:
            _apply_category_move(g, counts, rng, outside, "up")
        elif u < 1.0 - dn_p - esc_p:
            _apply_category_move(g, counts, rng, outside, "hold")
        elif u < 1.0 - dn_p:
            _apply_category_move(g, counts, rng, outside, "escape")
        else:
            _apply_category_move(g, counts, rng, outside, "down")

        # advance the comparison counter from the same uniform
        if u < c_up:
            comparison += 1
        elif u >= 1.0 - c_dn:
            comparison -= 1

        new_k = int(counts[outside].sum())
        if comparison > new_k:
            violations += 1
            raise DominationViolated(
                f"comparison {comparison} exceeded escape count {new_k} at step {t}")
        if comparison < new_k:
            strict += 1
    return DominationReport(steps, strict, int(counts[outside].sum()) - comparison,
                            violations)


def _apply_category_move(g: FiniteGroup, counts: np.ndarray, rng,
                         outside: np.ndarray, category: str) -> None:
    """Sample a value-level move conditioned on its effect category and apply it."""
    q = len(counts)
    weights = []
    moves = []
    for a in range(q):
        ca = int(counts[a])
        if ca == 0:
            continue
        for b in range(q):
            w = ca * (int(counts[b]) - (1 if a == b else 0))
            if w <= 0:
                continue
            for sign, prod in ((1, g.mult[a, b]), (-1, g.mult[a, g.inv[b]])):
                if not outside[b]:
                    cat = "hold"
                elif not outside[a]:
                    cat = "up"
                elif outside[prod]:
                    cat = "escape"
                else:
                    cat = "down"
                if cat == category:
                    weights.append(w)
                    moves.append((a, prod))
    total = sum(weights)
    r = int(rng.integers(total))
    acc = 0
    for w, (a, prod) in zip(weights, moves):
        acc += w
        if r < acc:
            counts[a] -= 1
            counts[prod] += 1
            return
    raise AssertionError("unreachable")
