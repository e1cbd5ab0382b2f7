import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from prodrep import coupling as cp
from prodrep import groups
from prodrep.errors import DZero, IntegralityViolated, NoValidDelta, OutsideMDelta
from prodrep.rng import stream
from prodrep.stats import PairCounts


def dense_pair(group, n, delta, rng, rows=None):
    """Random pair of matrices with every cell at the core floor or above."""
    q = group.order
    p = cp.core_cell_size(n, q, delta)
    if rows is None:
        base = n // q
        rows = tuple(base + (1 if a < n % q else 0) for a in range(q))

    def draw():
        counts = np.full((q, q), p, dtype=np.int64)
        for a in range(q):
            for _ in range(rows[a] - q * p):
                counts[a, int(rng.integers(q))] += 1
        return PairCounts(rows, counts)

    return draw(), draw()


# ---------------------------------------------------------------------------
# site-level oracle: expand the pair into explicit site sequences and follow
# the published move rules literally, one ordered site pair at a time


def site_tables(state: cp.CoupledState):
    q = state.group.order
    p = cp.core_cell_size(state.first.n, q, state.delta)
    n1, n2 = state.first.counts, state.second.counts
    m = np.minimum(n1, n2)
    sites = []  # (kind, row, value_first, value_second)
    for a in range(n1.shape[0]):
        for b in range(q):
            sites.extend([("core", a, b, b)] * p)
            sites.extend([("extra", a, b, b)] * (int(m[a, b]) - p))
        sur1, sur2 = [], []
        for b in range(q):
            sur1.extend([b] * (int(n1[a, b]) - int(m[a, b])))
            sur2.extend([b] * (int(n2[a, b]) - int(m[a, b])))
        for v1, v2 in zip(sorted(sur1), sorted(sur2)):
            sites.append(("odd", a, v1, v2))
    assert len(sites) == state.first.n
    return sites


def oracle_joint_law(state: cp.CoupledState):
    """Exhaustive enumeration of all 2 n (n-1) joint moves."""
    group = state.group
    g = group
    n = state.first.n
    sites = site_tables(state)
    a_star, b_plus, b_minus = cp._canonical_mismatch_raw(state.first.counts,
                                                         state.second.counts)
    w_exc = g.mul(g.inverse(b_plus), b_minus)
    d_now = int(np.abs(state.first.counts - state.second.counts).sum()) // 2
    base = Fraction(1, 2 * n * (n - 1))
    law = {}
    for k in range(n):
        kkind, krow, kb1, kb2 = sites[k]
        for l in range(n):
            if l == k:
                continue
            lkind, lrow, lb1, lb2 = sites[l]
            for sign in (1, -1):
                mv1 = state.first.counts.copy()
                mv2 = state.second.counts.copy()

                def move(mat, row, old, part):
                    new = g.mul(old, part if sign == 1 else g.inverse(part))
                    mat[row, old] -= 1
                    mat[row, new] += 1

                if kkind != "odd" and lkind != "odd":
                    exc_down = (sign == 1 and kkind == "core" and lkind == "core"
                                and krow == a_star and kb1 == b_plus
                                and lrow != a_star and lb1 == w_exc)
                    exc_up = (sign == 1 and kkind == "core" and lkind == "core"
                              and krow == a_star and kb1 == b_minus
                              and lrow != a_star and lb1 == 0)
                    if exc_down:
                        mv1[a_star, b_plus] -= 1
                        mv1[a_star, b_minus] += 1
                    elif exc_up:
                        mv2[a_star, b_plus] -= 1
                        mv2[a_star, b_minus] += 1
                    else:
                        move(mv1, krow, kb1, lb1)
                        move(mv2, krow, kb2, lb2)
                elif kkind == "odd" and lkind == "core":
                    # both copies land on the common value
                    new = g.mul(kb1, lb1 if sign == 1 else g.inverse(lb1))
                    mv1[krow, kb1] -= 1
                    mv1[krow, new] += 1
                    mv2[krow, kb2] -= 1
                    mv2[krow, new] += 1
                else:
                    move(mv1, krow, kb1, lb1)
                    move(mv2, krow, kb2, lb2)
                dd = int(np.abs(mv1 - mv2).sum()) // 2 - d_now
                key = (dd, tuple(mv1.reshape(-1)), tuple(mv2.reshape(-1)))
                law[key] = law.get(key, Fraction(0)) + base
    return law


@pytest.mark.parametrize("spec,n,delta", [
    ("c2", 32, Fraction(1, 8)),
    ("c3", 162, Fraction(1, 18)),
])
def test_case_breakdown_matches_site_oracle(spec, n, delta):
    group = groups.build_group(spec)
    rng = stream(101, 0)
    checked = 0
    while checked < 3:
        first, second = dense_pair(group, n, delta, rng)
        state = cp.CoupledState(group, first, second, delta)
        if state.distance == 0:
            continue
        checked += 1
        got = cp.case_breakdown(state).joint
        want = oracle_joint_law(state)
        assert got == want


def test_case_breakdown_contracts_many_random_states():
    for spec, n, delta in (("c2", 32, Fraction(1, 8)),
                           ("c3", 162, Fraction(1, 18))):
        group = groups.build_group(spec)
        q = group.order
        bound = Fraction(1 - delta) ** 2 / (4 * q ** 3)
        rng = stream(102, 0)
        checked = 0
        while checked < 50:
            first, second = dense_pair(group, n, delta, rng)
            state = cp.CoupledState(group, first, second, delta)
            if state.distance == 0:
                continue
            checked += 1
            bd = cp.case_breakdown(state)
            assert bd.expected_delta_d <= 0
            assert bd.prob_delta_d_nonzero >= bound
            assert sum(bd.case_probabilities.values()) == 1
            # both marginals are exactly the single-chain law
            assert bd.marginal_law(0) == cp.single_chain_law(group, first)
            assert bd.marginal_law(1) == cp.single_chain_law(group, second)


def test_case_delta_d_ranges():
    group = groups.build_group("c3")
    n, delta = 162, Fraction(1, 18)
    rng = stream(103, 0)
    seen_iv = False
    for _ in range(10):
        first, second = dense_pair(group, n, delta, rng)
        state = cp.CoupledState(group, first, second, delta)
        if state.distance == 0:
            continue
        bd = cp.case_breakdown(state)
        cond = bd.delta_d_conditional
        assert set(cond["odd_core"]) <= {-1}
        seen_iv |= bool(cond["odd_core"])
        assert all(dd <= 1 for dd in cond["extra_odd"])
        assert all(abs(dd) <= 1 for dd in cond["core_odd"])
        assert all(abs(dd) <= 1 for dd in cond["core"])
        if cond["exceptional"]:
            assert cond["exceptional"] == {1: Fraction(1, 2), -1: Fraction(1, 2)}
    assert seen_iv


def test_exceptional_probability_closed_form():
    group = groups.build_group("c2")
    n, delta = 64, Fraction(1, 8)
    q = group.order
    p = cp.core_cell_size(n, q, delta)
    rng = stream(104, 0)
    while True:
        first, second = dense_pair(group, n, delta, rng)
        state = cp.CoupledState(group, first, second, delta)
        if state.distance > 0:
            break
    bd = cp.case_breakdown(state)
    want = Fraction((q - 1) * p * p, n * (n - 1))  # both directions together
    assert bd.exceptional_probability == want
    # for groups of order two this sits next to (1-delta)^2 / (2 Q^3)
    approx = float(Fraction(1 - delta) ** 2 / (2 * q ** 3))
    assert abs(float(want) - approx) < 2.0 / n


def test_error_conditions():
    group = groups.build_group("c2")
    with pytest.raises(IntegralityViolated):
        cp.core_cell_size(16, 2, Fraction(1, 8))
    n, delta = 32, Fraction(1, 8)
    p = cp.core_cell_size(n, 2, delta)
    rows = (16, 16)
    equal = PairCounts(rows, np.full((2, 2), 8, dtype=np.int64))
    state = cp.CoupledState(group, equal, equal, delta)
    with pytest.raises(DZero):
        cp.case_breakdown(state)
    sparse = PairCounts(rows, np.array([[16, 0], [0, 16]]))
    other = PairCounts(rows, np.array([[15, 1], [1, 15]]))
    with pytest.raises(OutsideMDelta):
        cp.case_breakdown(cp.CoupledState(group, sparse, other, delta))


def test_identical_matrices_stay_identical():
    group = groups.build_group("c2")
    n, delta = 32, Fraction(1, 8)
    rows = (16, 16)
    equal = PairCounts(rows, np.full((2, 2), 8, dtype=np.int64))
    state = cp.CoupledState(group, equal, equal, delta)
    rng = stream(105, 0)
    for _ in range(200):
        state = cp.coupled_step(state, rng)
        assert state.coalesced


def test_outside_dense_region_runs_independently():
    group = groups.build_group("c2")
    n, delta = 32, Fraction(1, 8)
    rows = (16, 16)
    sparse = PairCounts(rows, np.array([[16, 0], [0, 16]]))
    other = PairCounts(rows, np.array([[12, 4], [4, 12]]))
    state = cp.CoupledState(group, sparse, other, delta)
    rng = stream(106, 0)
    nxt = cp.coupled_step(state, rng)  # must not raise
    assert nxt.first.n == n


def test_delta_interval_selection():
    delta = cp.pick_coupling_delta(700, 2)
    assert Fraction(2, 20) < delta < Fraction(3, 28)
    assert (Fraction(1 - delta) * 700 / 4).denominator == 1
    with pytest.raises(NoValidDelta):
        cp.pick_coupling_delta(140, 2)


def test_distance_never_regrows_after_coalescence_in_experiment():
    group = groups.build_group("c2")
    n = 700
    rows = (350, 350)

    def sampler(rng):
        from prodrep.chain import sample_stationary_pair_counts
        a = sample_stationary_pair_counts(group, rows, rng)
        return a, a  # identical starts

    res = cp.coalescence_experiment(group, n, rows, 2.0, 1.0, 5, 9, sampler)
    assert res.taus == [0] * 5


def test_coalescence_experiment_small():
    group = groups.build_group("c2")
    n = 700
    rows = (350, 350)
    q = group.order
    r_val = 2.0

    def sampler(rng):
        from prodrep.chain import sample_stationary_pair_counts
        out = []
        while len(out) < 2:
            pc = sample_stationary_pair_counts(group, rows, rng)
            ok = all(math.sqrt(((pc.counts[a] / rows[a] - 1 / q) ** 2).sum())
                     <= r_val / math.sqrt(n) for a in range(q))
            if ok:
                out.append(pc)
        return out[0], out[1]

    res = cp.coalescence_experiment(group, n, rows, r_val, 8.0, 12, 10, sampler)
    assert max(res.initial_distances) <= math.sqrt(q) * r_val * math.sqrt(n)
    assert res.tail_upper99() <= res.bound or res.bound >= 1.0
    summary = res.summary()
    assert not summary["bound_violated"]


def test_csv_and_summary_export(tmp_path):
    res = cp.CoalescenceResult([3, 5, 100], 50, 2.0, 9.0, Fraction(1, 8), [4, 4, 6])
    cp.export_coalescence_csv(tmp_path / "c.csv", res)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "replica,tau,horizon,coalesced"
    assert lines[3] == "2,100,50,0"
    cp.export_summary_json(tmp_path / "s.json", res.summary())
    assert (tmp_path / "s.json").exists()


def test_sampler_frequencies_match_exact_joint_law():
    group = groups.build_group("c2")
    n, delta = 32, Fraction(1, 8)
    rng = stream(107, 0)
    while True:
        first, second = dense_pair(group, n, delta, rng)
        state = cp.CoupledState(group, first, second, delta)
        if state.distance > 0:
            break
    bd = cp.case_breakdown(state)
    law = bd.marginal_law(1)
    trials = 60_000
    obs = Counter()
    for _ in range(trials):
        nxt = cp.coupled_step(state, rng)
        obs[tuple(nxt.second.counts.reshape(-1))] += 1
    from scipy.stats import chisquare
    keys = sorted(law)
    stat, p = chisquare([obs.get(k, 0) for k in keys],
                        [float(law[k]) * trials for k in keys])
    assert p > 1e-4
