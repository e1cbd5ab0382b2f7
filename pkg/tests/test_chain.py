import math
from fractions import Fraction

import numpy as np
import pytest

from prodrep import chain, groups, stats
from prodrep.errors import NTooSmall, RejectionBudgetExceeded
from prodrep.rng import stream

SHIPPED = ["c2", "c3", "c6", "s3"]


def test_step_changes_one_site():
    g = groups.cyclic(6)
    cfg = chain.worst_case_start(g, 10)
    rng = stream(1, 0)
    for _ in range(50):
        nxt = chain.step(cfg, rng)
        assert (nxt.sites != cfg.sites).sum() <= 1
        cfg = nxt


def test_identity_partner_holds():
    g = groups.cyclic(6)
    cfg = chain.Configuration(g, [1, 0, 0, 0])
    out = cfg.copy()
    chain.apply_move(out, 1, 2, 1)  # partner value is the identity
    np.testing.assert_array_equal(out.sites, cfg.sites)


def test_one_step_distribution_is_uniform_over_moves():
    g = groups.cyclic(2)
    cfg = chain.Configuration(g, [1, 0, 0, 0])
    dist = chain.one_step_distribution(cfg)
    assert sum(dist.values()) == 1
    # the n=2 state has four equiprobable moves
    tiny = chain.Configuration(g, [1, 0])
    d2 = chain.one_step_distribution(tiny)
    assert all(v.denominator <= 4 for v in d2.values())
    assert sum(d2.values()) == 1
    # target (1,1,0,0): exactly moves (i=2, j=1, +/-): prob 2/24
    assert dist[(1, 1, 0, 0)] == Fraction(2, 24)
    # holds: i=1 against identity partners (6 moves) plus 0*0 moves (12)
    assert dist[(1, 0, 0, 0)] == Fraction(18, 24)


def test_sampler_matches_exact_one_step_law():
    g = groups.symmetric(3)
    cfg = chain.Configuration(g, [1, 2, 0, 3])
    dist = chain.one_step_distribution(cfg)
    rng = stream(2, 0)
    from collections import Counter
    obs = Counter()
    trials = 40_000
    for _ in range(trials):
        obs[tuple(chain.step(cfg, rng).sites.tolist())] += 1
    from scipy.stats import chisquare
    keys = sorted(dist)
    stat, p = chisquare([obs.get(k, 0) for k in keys],
                        [float(dist[k]) * trials for k in keys])
    assert p > 1e-4


@pytest.mark.parametrize("spec", SHIPPED)
def test_generated_subgroup_preserved_along_path(spec):
    g = groups.build_group(spec)
    full = (1 << g.order) - 1
    rng = stream(3, 0)
    cur = chain.worst_case_start(g, 12)
    counts = stats.value_counts(cur)
    closure_cache = {}
    for t in range(20_000):
        i, j, s = chain.sample_move(cur.n, rng)
        old = int(cur.sites[i])
        chain.apply_move(cur, i, j, s)
        counts[old] -= 1
        counts[cur.sites[i]] += 1
        mask = 0
        for a in range(g.order):
            if counts[a]:
                mask |= 1 << a
        if mask not in closure_cache:
            closure_cache[mask] = g.closure([a for a in range(g.order)
                                             if counts[a]])
        assert closure_cache[mask] == full


@pytest.mark.parametrize("spec", SHIPPED)
def test_expected_increment_self_oracle(spec):
    g = groups.build_group(spec)
    rng = stream(4, 0)
    for _ in range(25):
        cfg = chain.sample_stationary(g, 9, rng)
        inc = chain.expected_increment(cfg)
        assert inc.closed_form == inc.brute_force
        assert sum(inc.closed_form) == 0
        assert inc.max_discrepancy <= 1e-12


def test_expected_increment_hand_value():
    g = groups.cyclic(2)
    inc = chain.expected_increment(chain.Configuration(g, [1, 0, 0, 0]))
    assert inc.closed_form[1] == Fraction(1, 4)
    assert inc.closed_form[0] == Fraction(-1, 4)


def test_single_move_changes_count_by_at_most_one():
    g = groups.symmetric(3)
    rng = stream(5, 0)
    cur = chain.worst_case_start(g, 8)
    prev = stats.value_counts(cur)
    for _ in range(2000):
        i, j, s = chain.sample_move(cur.n, rng)
        chain.apply_move(cur, i, j, s)
        now = stats.value_counts(cur)
        assert np.abs(now - prev).max() <= 1
        assert np.abs(now - prev).sum() in (0, 2)
        prev = now


def test_worst_case_start_examples():
    assert chain.worst_case_start(groups.cyclic(2), 4).sites.tolist() == [1, 0, 0, 0]
    assert chain.worst_case_start(groups.cyclic(6), 5).sites.tolist() == [1, 0, 0, 0, 0]
    s3 = chain.worst_case_start(groups.symmetric(3), 6)
    assert (s3.sites != 0).sum() == 2
    with pytest.raises(NTooSmall):
        chain.worst_case_start(groups.symmetric(3), 1)


def test_stationary_sampler_acceptance_rate():
    g = groups.cyclic(2)
    st_rec = chain.RejectionStats()
    rng = stream(6, 0)
    for _ in range(3000):
        chain.sample_stationary(g, 4, rng, stats=st_rec)
    assert abs(st_rec.acceptance_rate - 15 / 16) < 0.02
    # acceptance approaches 1 as n grows
    rates = []
    for n in (4, 8, 16):
        rec = chain.RejectionStats()
        for _ in range(1500):
            chain.sample_stationary(g, n, rng, stats=rec)
        rates.append(rec.acceptance_rate)
    assert rates == sorted(rates)


def test_rejection_budget_error():
    g = groups.cyclic(6)

    class NeverGood:
        def integers(self, *a, **k):
            return np.zeros(5, dtype=np.int64)

    with pytest.raises(RejectionBudgetExceeded):
        chain.sample_stationary(g, 5, NeverGood(), budget=10)


def test_trajectory_observer_hook():
    g = groups.cyclic(3)
    cfg = chain.worst_case_start(g, 10)
    seen = []
    chain.run_trajectory(cfg, 40, stream(7, 0),
                         observer=lambda t, c: seen.append(t), observe_every=10)
    assert seen == [0, 10, 20, 30, 40]


def test_batch_count_chain_matches_single_step_law():
    # the batched kernel and the exact law must agree in distribution
    g = groups.cyclic(3)
    start = np.array([[2, 1, 1]], dtype=np.int64)
    from prodrep.coupling import single_chain_law
    from prodrep.stats import PairCounts
    law = single_chain_law(g, PairCounts((4,), start))
    rng = stream(8, 0)
    reps = 30_000
    batch = chain.CountChainBatch(g, start, reps, rng)
    batch.step()
    from collections import Counter
    obs = Counter(tuple(v) for v in batch.counts[:, 0, :].tolist())
    from scipy.stats import chisquare
    keys = sorted(law)
    stat, p = chisquare([obs.get(k, 0) for k in keys],
                        [float(law[k]) * reps for k in keys])
    assert p > 1e-4
