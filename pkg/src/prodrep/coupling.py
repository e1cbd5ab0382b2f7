"""Coupling of two pair-count chains sharing one reference configuration.

Sites are bucketed into a common core P (cells where both chains agree,
(1-delta)n/Q^2 sites per value pair), extra matched sites Q, and unmatched
sites R paired surplus-to-deficit within each row. One shared move keeps
both marginals exact while the half-l1 distance D between the matrices
never grows in expectation and fluctuates at a state-free rate, which is
what drives coalescence in O(n) steps.

Moves are sampled at the level of bucket labels; by permutation symmetry
this is equivalent to the site-level description, which the test suite's
exhaustive enumeration oracle checks move by move.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (DZero, IntegralityViolated, NoValidDelta, OutsideMDelta,
                     RowSumMismatch)
from .groups import FiniteGroup
from .stats import PairCounts, half_l1_distance


def core_cell_size(n: int, q: int, delta) -> int:
    """(1-delta) n / Q^2, required to be an integer."""
    size = Fraction(1 - Fraction(delta)) * n / q ** 2
    if size.denominator != 1:
        raise IntegralityViolated(
            f"(1-delta)n/Q^2 = {size} is not an integer (n={n}, Q={q}, delta={delta})")
    return int(size)


def in_dense_cell_set(pc: PairCounts, delta) -> bool:
    """Every cell at least (1-delta)n/Q^2 (the coupling's analysis region)."""
    q = pc.counts.shape[1]
    size = core_cell_size(pc.n, q, delta)
    return bool((pc.counts >= size).all())


def pick_coupling_delta(n: int, q: int) -> Fraction:
    """Largest delta in (2/(5Q^2), 3/(7Q^2)) making the core size integral."""
    lo = Fraction(2, 5 * q * q)
    hi = Fraction(3, 7 * q * q)
    best = None
    m_low = math.floor(n * (1 - hi) / q ** 2)
    m_high = math.ceil(n * (1 - lo) / q ** 2)
    for m in range(m_low, m_high + 1):
        delta = 1 - Fraction(m * q * q, n)
        if lo < delta < hi:
            if best is None or delta > best:
                best = delta
    if best is None:
        raise NoValidDelta(
            f"no admissible coupling parameter for n={n}, Q={q}; "
            f"need an integer in (n(1-{hi}), n(1-{lo}))/Q^2")
    return best


@dataclass
class CoupledState:
    """Pair of pair-count matrices with common row sums, plus the coupling
    parameter. Once coalesced the two matrices stay identical forever."""

    group: FiniteGroup
    first: PairCounts
    second: PairCounts
    delta: Fraction

    def __post_init__(self):
        if tuple(self.first.row_sums) != tuple(self.second.row_sums):
            raise RowSumMismatch("coupled matrices must share row sums")
        core_cell_size(self.first.n, self.group.order, self.delta)

    @property
    def distance(self) -> int:
        return half_l1_distance(self.first, self.second)

    @property
    def coalesced(self) -> bool:
        return self.distance == 0


# bucket kinds
_CORE, _EXTRA, _ODD = 0, 1, 2


def _buckets_raw(q: int, p: int, n1: np.ndarray, n2: np.ndarray):
    """Bucket labels and sizes for the current pair.

    Returns a list of (kind, row, value or (value, other_value), count).
    Core buckets hold the first (1-delta)n/Q^2 agreeing sites of every value
    pair; extra buckets the remaining agreeing sites; odd buckets the
    unmatched sites, with the first chain's surplus values paired to the
    second's in ascending element order.
    """
    m = np.minimum(n1, n2)
    out = []
    for a in range(n1.shape[0]):
        for b in range(q):
            out.append((_CORE, a, b, p))
            extra = int(m[a, b]) - p
            if extra > 0:
                out.append((_EXTRA, a, b, extra))
        surplus1 = []
        surplus2 = []
        for b in range(q):
            d1 = int(n1[a, b]) - int(m[a, b])
            d2 = int(n2[a, b]) - int(m[a, b])
            surplus1.extend([b] * d1)
            surplus2.extend([b] * d2)
        pairs: dict[tuple[int, int], int] = {}
        for v1, v2 in zip(sorted(surplus1), sorted(surplus2)):
            pairs[(v1, v2)] = pairs.get((v1, v2), 0) + 1
        for (v1, v2), cnt in sorted(pairs.items()):
            out.append((_ODD, a, (v1, v2), cnt))
    return out


def _buckets(state: CoupledState):
    p = core_cell_size(state.first.n, state.group.order, state.delta)
    return _buckets_raw(state.group.order, p, state.first.counts,
                        state.second.counts), p


def _canonical_mismatch_raw(n1: np.ndarray, n2: np.ndarray) -> tuple[int, int, int]:
    """Smallest row with a mismatch, its smallest surplus value in the first
    chain and smallest deficit value; defines the exceptional move pair."""
    for a in range(n1.shape[0]):
        diff = n1[a] - n2[a]
        if np.any(diff != 0):
            bp = next(b for b in range(len(diff)) if diff[b] > 0)
            bm = next(b for b in range(len(diff)) if diff[b] < 0)
            return a, bp, bm
    raise DZero("matrices are identical")


def _canonical_mismatch(state: CoupledState) -> tuple[int, int, int]:
    return _canonical_mismatch_raw(state.first.counts, state.second.counts)


def _apply(counts: np.ndarray, row: int, old: int, new: int) -> None:
    counts[row, old] -= 1
    counts[row, new] += 1


def _move_value(group: FiniteGroup, b: int, d: int, sign: int) -> int:
    return int(group.mult[b, d] if sign == 1 else group.mult[b, group.inv[d]])


def _partner_value_for_second(group: FiniteGroup, b1: int, b2: int, c: int,
                              sign: int) -> int:
    """Value c' with b2 * (c')^sign == b1 * c^sign.

    Relabeling the second chain's partner this way makes both chains move an
    unmatched site to one common value, which is what forces the distance
    down by one in the odd-times-core case.
    """
    target = _move_value(group, b1, c, sign)
    # solve b2 * x = target, then c' = x^(sign)
    x = int(group.mult[group.inv[b2], target])
    return x if sign == 1 else int(group.inv[x])


def coupled_step(state: CoupledState, rng) -> CoupledState:
    """One joint transition; each marginal is an exact chain step.

    Requires both matrices inside the dense-cell region; otherwise the two
    chains step independently. Identical matrices move in lockstep forever.
    """
    q = state.group.order
    n = state.first.n
    new1 = state.first.counts.copy()
    new2 = state.second.counts.copy()

    if state.coalesced:
        _independent_move(state.group, new1, rng, mirror=new2)
    elif not (in_dense_cell_set(state.first, state.delta)
              and in_dense_cell_set(state.second, state.delta)):
        _independent_move(state.group, new1, rng)
        _independent_move(state.group, new2, rng)
    else:
        _coupled_move(state, new1, new2, rng)
    return CoupledState(
        state.group,
        PairCounts(state.first.row_sums, new1),
        PairCounts(state.second.row_sums, new2),
        state.delta,
    )


def _independent_move(group: FiniteGroup, counts: np.ndarray, rng,
                      mirror: np.ndarray | None = None) -> None:
    """One marginal chain step on a count matrix (optionally mirrored)."""
    n = int(counts.sum())
    flat = counts.reshape(-1)
    src = _sample_weighted(flat, int(rng.integers(n)))
    flat[src] -= 1
    par = _sample_weighted(flat, int(rng.integers(n - 1)))
    flat[src] += 1
    sign = 1 if rng.integers(2) else -1
    qn = counts.shape[1]
    row, b = divmod(src, qn)
    d = par % qn
    nb = _move_value(group, b, d, sign)
    _apply(counts, row, b, nb)
    if mirror is not None:
        _apply(mirror, row, b, nb)


def _sample_weighted(weights, r: int) -> int:
    acc = 0
    for i, w in enumerate(weights):
        acc += int(w)
        if r < acc:
            return i
    raise AssertionError("weight sampling ran past the total")


def _coupled_move(state: CoupledState, new1: np.ndarray, new2: np.ndarray,
                  rng) -> None:
    p = core_cell_size(state.first.n, state.group.order, state.delta)
    _coupled_move_raw(state.group, state.first.counts, state.second.counts,
                      p, new1, new2, rng)


def _coupled_move_raw(group: FiniteGroup, cur1: np.ndarray, cur2: np.ndarray,
                      p: int, new1: np.ndarray, new2: np.ndarray, rng) -> None:
    q = group.order
    n = int(cur1.sum())
    buckets = _buckets_raw(q, p, cur1, cur2)
    a_star, b_plus, b_minus = _canonical_mismatch_raw(cur1, cur2)
    w_exc = int(group.mult[group.inv[b_plus], b_minus])  # b_plus^{-1} b_minus

    counts = [c for (_, _, _, c) in buckets]
    ki = _sample_weighted(counts, int(rng.integers(n)))
    counts[ki] -= 1
    li = _sample_weighted(counts, int(rng.integers(n - 1)))
    counts[ki] += 1
    sign = 1 if rng.integers(2) else -1

    kkind, krow, kval, _ = buckets[ki]
    lkind, lrow, lval, _ = buckets[li]

    if kkind != _ODD and lkind != _ODD:
        # both sites agree across chains; the exceptional swap needs the
        # partner's row away from the mismatch row so that the up and down
        # variants have identical measure (they are exchanged by a bijection)
        kb = kval
        ld = lval
        exceptional_down = (sign == 1 and kkind == _CORE and lkind == _CORE
                            and krow == a_star and kb == b_plus
                            and lrow != a_star and ld == w_exc)
        exceptional_up = (sign == 1 and kkind == _CORE and lkind == _CORE
                          and krow == a_star and kb == b_minus
                          and lrow != a_star and ld == 0)
        if exceptional_down:
            # first chain moves its surplus site onto the deficit value; the
            # relabeled second-chain move is a hold
            _apply(new1, a_star, b_plus, b_minus)
        elif exceptional_up:
            # first chain holds; second chain's relabeled move shifts mass
            # from its deficit value to its surplus value
            _apply(new2, a_star, b_plus, b_minus)
        else:
            nb = _move_value(group, kb, ld, sign)
            _apply(new1, krow, kb, nb)
            _apply(new2, krow, kb, nb)
    elif kkind == _ODD and lkind == _CORE:
        # unmatched site updated against a core partner: relabel the second
        # chain's partner so both land on the same value
        b1, b2 = kval
        c = lval
        nb = _move_value(group, b1, c, sign)
        _apply(new1, krow, b1, nb)
        _apply(new2, krow, b2, nb)
    else:
        # remaining constellations: same move applied to both chains with
        # each chain's own site values
        if kkind == _ODD:
            b1, b2 = kval
        else:
            b1 = b2 = kval
        if lkind == _ODD:
            d1, d2 = lval
        else:
            d1 = d2 = lval
        _apply(new1, krow, b1, _move_value(group, b1, d1, sign))
        _apply(new2, krow, b2, _move_value(group, b2, d2, sign))


# ---------------------------------------------------------------------------
# exact case analysis


@dataclass
class CaseBreakdown:
    """Exact probabilities of the four move constellations plus the
    exceptional sub-case, with conditional distance-change laws."""

    case_probabilities: dict[str, Fraction]
    exceptional_probability: Fraction
    delta_d_conditional: dict[str, dict[int, Fraction]]
    joint: dict[tuple, Fraction] = field(repr=False, default_factory=dict)

    @property
    def expected_delta_d(self) -> Fraction:
        total = Fraction(0)
        for (dd, _, _), pr in self.joint.items():
            total += dd * pr
        return total

    @property
    def prob_delta_d_nonzero(self) -> Fraction:
        return sum((pr for (dd, _, _), pr in self.joint.items() if dd != 0),
                   Fraction(0))

    def marginal_law(self, which: int) -> dict[tuple, Fraction]:
        out: dict[tuple, Fraction] = {}
        for (_, m1, m2), pr in self.joint.items():
            key = m1 if which == 0 else m2
            out[key] = out.get(key, Fraction(0)) + pr
        return out


def case_breakdown(state: CoupledState) -> CaseBreakdown:
    """Enumerate every (bucket, bucket, sign) move with exact probabilities.

    The contract checked by the suite: the expected distance change is never
    positive and the move-probability of changing the distance is at least
    (1-delta)^2 / (4 Q^3), both exactly.
    """
    group = state.group
    q = group.order
    n = state.first.n
    if state.distance == 0:
        raise DZero("case analysis needs distinct matrices")
    if not (in_dense_cell_set(state.first, state.delta)
            and in_dense_cell_set(state.second, state.delta)):
        raise OutsideMDelta("state pair leaves the dense-cell region")

    buckets, p = _buckets(state)
    a_star, b_plus, b_minus = _canonical_mismatch(state)
    w_exc = int(group.mult[group.inv[b_plus], b_minus])
    d_now = state.distance

    joint: dict[tuple, Fraction] = {}
    case_probs = {"core": Fraction(0), "extra_odd": Fraction(0),
                  "core_odd": Fraction(0), "odd_core": Fraction(0)}
    exc_prob = Fraction(0)
    cond: dict[str, dict[int, Fraction]] = {k: {} for k in
                                            ("core", "extra_odd", "core_odd",
                                             "odd_core", "exceptional")}

    base = Fraction(1, 2 * n * (n - 1))
    for ki, (kkind, krow, kval, kc) in enumerate(buckets):
        if kc == 0:
            continue
        for li, (lkind, lrow, lval, lc) in enumerate(buckets):
            pairs = kc * (lc - (1 if li == ki else 0))
            if pairs <= 0:
                continue
            for sign in (1, -1):
                pr = base * pairs
                new1 = state.first.counts.copy()
                new2 = state.second.counts.copy()
                exceptional = False
                if kkind != _ODD and lkind != _ODD:
                    kb, ld = kval, lval
                    if (sign == 1 and kkind == _CORE and lkind == _CORE
                            and krow == a_star and kb == b_plus
                            and lrow != a_star and ld == w_exc):
                        _apply(new1, a_star, b_plus, b_minus)
                        exceptional = True
                    elif (sign == 1 and kkind == _CORE and lkind == _CORE
                          and krow == a_star and kb == b_minus
                          and lrow != a_star and ld == 0):
                        _apply(new2, a_star, b_plus, b_minus)
                        exceptional = True
                    else:
                        nb = _move_value(group, kb, ld, sign)
                        _apply(new1, krow, kb, nb)
                        _apply(new2, krow, kb, nb)
                    case = "core"
                elif kkind == _ODD and lkind == _CORE:
                    b1, b2 = kval
                    nb = _move_value(group, b1, lval, sign)
                    _apply(new1, krow, b1, nb)
                    _apply(new2, krow, b2, nb)
                    case = "odd_core"
                elif kkind == _CORE and lkind == _ODD:
                    d1, d2 = lval
                    _apply(new1, krow, kval, _move_value(group, kval, d1, sign))
                    _apply(new2, krow, kval, _move_value(group, kval, d2, sign))
                    case = "core_odd"
                else:
                    b1, b2 = kval if kkind == _ODD else (kval, kval)
                    d1, d2 = lval if lkind == _ODD else (lval, lval)
                    _apply(new1, krow, b1, _move_value(group, b1, d1, sign))
                    _apply(new2, krow, b2, _move_value(group, b2, d2, sign))
                    case = "extra_odd"
                dd = int(np.abs(new1 - new2).sum()) // 2 - d_now
                key = (dd, tuple(new1.reshape(-1)), tuple(new2.reshape(-1)))
                joint[key] = joint.get(key, Fraction(0)) + pr
                if exceptional:
                    exc_prob += pr
                    cond["exceptional"][dd] = cond["exceptional"].get(dd, Fraction(0)) + pr
                case_probs[case] += pr
                cond[case][dd] = cond[case].get(dd, Fraction(0)) + pr

    total = sum(case_probs.values())
    if total != 1:
        raise AssertionError(f"case probabilities sum to {total}")
    for case, dist in cond.items():
        norm = sum(dist.values())
        if norm:
            cond[case] = {dd: pr / norm for dd, pr in dist.items()}
    return CaseBreakdown(case_probs, exc_prob, cond, joint)


def single_chain_law(group: FiniteGroup, pc: PairCounts) -> dict[tuple, Fraction]:
    """Exact one-step law of the count-matrix chain, for marginal checks."""
    n = pc.n
    q = group.order
    flat = [int(v) for v in pc.counts.reshape(-1)]
    out: dict[tuple, Fraction] = {}
    base = Fraction(1, 2 * n * (n - 1))
    for src, c1 in enumerate(flat):
        if c1 == 0:
            continue
        row, b = divmod(src, q)
        for par, c2raw in enumerate(flat):
            c2 = c2raw - (1 if par == src else 0)
            if c2 <= 0:
                continue
            d = par % q
            for sign in (1, -1):
                nb = _move_value(group, b, d, sign)
                new = list(flat)
                new[src] -= 1
                new[row * q + nb] += 1
                key = tuple(new)
                out[key] = out.get(key, Fraction(0)) + base * c1 * c2
    return out


# ---------------------------------------------------------------------------
# coalescence experiment


@dataclass
class CoalescenceResult:
    taus: list[int]
    horizon: int
    beta: float
    r_bound: float
    delta: Fraction
    initial_distances: list[int]

    @property
    def tail_estimate(self) -> float:
        return sum(t > self.horizon for t in self.taus) / len(self.taus)

    def tail_upper99(self) -> float:
        k = sum(t > self.horizon for t in self.taus)
        m = len(self.taus)
        z = 2.576
        ph = k / m
        denom = 1 + z * z / m
        center = ph + z * z / (2 * m)
        half = z * math.sqrt(ph * (1 - ph) / m + z * z / (4 * m * m))
        return min(1.0, (center + half) / denom)

    @property
    def bound(self) -> float:
        return self.r_bound

    def summary(self) -> dict:
        return {
            "replicas": len(self.taus),
            "horizon": self.horizon,
            "beta": self.beta,
            "delta": str(self.delta),
            "tail_estimate": self.tail_estimate,
            "tail_upper99": self.tail_upper99(),
            "bound": self.r_bound,
            "bound_violated": self.tail_upper99() > self.r_bound and self.r_bound < 1.0,
            "max_initial_distance": max(self.initial_distances),
        }


def coalescence_experiment(group: FiniteGroup, n: int, reference_row_sums,
                           r_radius: float, beta: float, replicas: int,
                           seed: int, sampler) -> CoalescenceResult:
    """Draw coupled starts inside the row-proximity ball of radius
    r_radius/sqrt(n), run the coupling for beta*n steps per replica and
    report the empirical tail of the coalescence time against
    32 Q^2 r_radius / sqrt(beta).

    ``sampler(rng)`` must yield admissible start pairs (PairCounts pairs);
    replicas use independent streams and are aggregated in index order.
    """
    from .rng import stream

    q = group.order
    delta = pick_coupling_delta(n, q)
    horizon = int(beta * n)
    taus = []
    d0s = []
    for rep in range(replicas):
        rng = stream(seed, rep)
        first, second = sampler(rng)
        state = CoupledState(group, first, second, delta)
        d0s.append(state.distance)
        taus.append(_run_to_coalescence(state, horizon, rng))
    bound = 32 * q * q * r_radius / math.sqrt(beta)
    return CoalescenceResult(taus, horizon, beta, bound, delta, d0s)


def _run_to_coalescence(state: CoupledState, horizon: int, rng) -> int:
    """Coalescence time capped at horizon+1, on raw arrays for speed."""
    group = state.group
    delta = state.delta
    pmin = core_cell_size(state.first.n, group.order, delta)
    c1 = state.first.counts.copy()
    c2 = state.second.counts.copy()
    dist = int(np.abs(c1 - c2).sum()) // 2
    t = 0
    while t <= horizon:
        if dist == 0:
            return t
        if (c1 >= pmin).all() and (c2 >= pmin).all():
            _coupled_move_raw(group, c1, c2, pmin, c1, c2, rng)
        else:
            _independent_move(group, c1, rng)
            _independent_move(group, c2, rng)
        dist = int(np.abs(c1 - c2).sum()) // 2
        t += 1
    return horizon + 1


def export_coalescence_csv(path, result: CoalescenceResult) -> None:
    with open(path, "w") as fh:
        fh.write("replica,tau,horizon,coalesced\n")
        for i, t in enumerate(result.taus):
            co = int(t <= result.horizon)
            fh.write(f"{i},{t},{result.horizon},{co}\n")


def export_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
