import math
from fractions import Fraction

import numpy as np
import pytest

from prodrep import birthdeath as bd
from prodrep import chain, groups
from prodrep.errors import PreconditionViolated
from prodrep.rng import stream


def test_rates_form_a_distribution_exactly():
    ch = bd.BDChain(17)
    for k in range(1, 18):
        assert ch.p_up(k) + ch.p_down(k) + ch.p_hold(k) == 1
    assert ch.p_down(1) == 0
    assert ch.p_up(17) == 0


def test_first_leg_is_geometric():
    hm = bd.hitting_moments(30)
    assert hm.expectations[2] == 30  # 1 / p_up(1) with p_up(1) = 1/n
    assert hm.variances[2] == 30 * 30 - 30


def test_moments_match_linear_solve_oracle():
    n = 24
    hm = bd.hitting_moments(n, k_max=8)
    ch = bd.BDChain(n)
    for target in range(2, 9):
        m = target - 1
        a = np.zeros((m, m))
        rhs = np.ones(m)
        for j in range(1, target):
            r = j - 1
            a[r, r] = 1.0 - float(ch.p_hold(j))
            if j + 1 < target:
                a[r, j] = -float(ch.p_up(j))
            if j - 1 >= 1:
                a[r, j - 2] -= float(ch.p_down(j))
        sol = np.linalg.solve(a, rhs)
        assert abs(sol[-1] - float(hm.expectations[target])) < 1e-8


def test_moments_match_monte_carlo():
    n = 30
    target = n // 3
    hm = bd.hitting_moments(n)
    mean = float(hm.total_expectation())
    var = float(hm.total_variance())
    rng = stream(41, 0)
    ch = bd.BDChain(n)
    reps = 4000
    times = np.empty(reps)
    for r in range(reps):
        k, t = 1, 0
        while k < target:
            k = ch.step(k, rng)
            t += 1
        times[r] = t
    se = times.std(ddof=1) / math.sqrt(reps)
    assert abs(times.mean() - mean) <= 3.5 * se
    # variance agreement at the blunt 25% level is plenty for a sanity oracle
    assert abs(times.var(ddof=1) - var) <= 0.25 * var


@pytest.mark.parametrize("n", [30, 100, 300])
def test_leg_bounds(n):
    hm = bd.hitting_moments(n)
    # per-leg bound indexed by the leg's starting level
    for target, e in hm.expectations.items():
        k = target - 1
        assert e <= Fraction(n * n, k * (n - 2 * k))
    assert hm.total_expectation() <= n * math.log(n) + n
    v = hm.variances
    assert v[2] <= n * n
    for target in sorted(v):
        k = target - 1
        if target + 1 in v:
            assert v[target + 1] <= Fraction(k + 1, n - k - 1) * v[target] \
                + Fraction(54 * n * n, (k + 1) ** 2)
    assert hm.total_variance() <= 110 * n * n


def test_stationary_law_and_detailed_balance():
    n = 20
    pi = bd.bd_stationary(n)
    assert sum(pi) == 1
    assert all(r == 0 for r in bd.detailed_balance_residuals(n))


def test_escape_probability_bounded():
    rep = bd.escape_probability_experiment(30, 10, 5, 900, 3000, stream(42, 0))
    assert not rep["violated"]
    assert rep["estimate"] <= rep["bound"]


def test_small_n_rejected():
    with pytest.raises(PreconditionViolated):
        bd.hitting_moments(5)


def test_domination_equality_for_index_two_subgroup():
    # a subgroup of index two absorbs every product of two outside elements,
    # so the comparison counter tracks the escape count exactly
    g = groups.cyclic(2)
    cfg = chain.worst_case_start(g, 30)
    rep = bd.domination_check(g, g.proper_subgroups[0], cfg, 4000, stream(43, 0))
    assert rep.violations == 0
    assert rep.strict_gap_steps == 0
    assert rep.final_gap == 0

    g6 = groups.cyclic(6)
    even = next(s for s in g6.proper_subgroups if s.elements() == (0, 2, 4))
    rep6 = bd.domination_check(g6, even, chain.worst_case_start(g6, 30),
                               4000, stream(44, 0))
    assert rep6.violations == 0 and rep6.final_gap == 0


def test_domination_strict_for_other_subgroups():
    g6 = groups.cyclic(6)
    third = next(s for s in g6.proper_subgroups if s.elements() == (0, 3))
    strict = 0
    for r in range(30):
        rep = bd.domination_check(g6, third, chain.worst_case_start(g6, 24),
                                  1500, stream(45, r))
        assert rep.violations == 0
        strict += rep.strict_gap_steps
    assert strict > 0

    s3 = groups.symmetric(3)
    for sub in s3.proper_subgroups:
        rep = bd.domination_check(s3, sub, chain.worst_case_start(s3, 24),
                                  1500, stream(46, sub.mask))
        assert rep.violations == 0


def test_domination_requires_escaped_start():
    g = groups.cyclic(2)
    cfg = chain.Configuration(g, [0, 0, 0, 1], check=False)
    sub = g.proper_subgroups[0]
    ok = bd.domination_check(g, sub, cfg, 10, stream(47, 0))
    assert ok.violations == 0
    bad = chain.Configuration(g, [0, 0, 0, 0], check=False)
    with pytest.raises(PreconditionViolated):
        bd.domination_check(g, sub, bad, 10, stream(47, 1))
