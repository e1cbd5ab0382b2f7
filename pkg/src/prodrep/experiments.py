"""Configured experiments reproducing the mixing phenomenology at desk scale.

Four runners: the cutoff profile (exact where the lumped chain fits, Monte
Carlo bounds otherwise), the burn-in tail, the Fourier-coefficient decay
rate, and the lower-bound tails. Each writes a CSV of rows plus a JSON
summary carrying bound checks, confidence intervals and environment
metadata; outputs are bit-for-bit reproducible from (config, seed).
"""
from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from .chain import (CountChainBatch, sample_stationary,
                    sample_stationary_pair_counts, worst_case_start)
from .coupling import CoupledState, PairCounts, pick_coupling_delta
from .errors import NoValidDelta, StateBudgetExceeded
from .groups import FiniteGroup, build_group
from .lumped import build_lumped, diag_start, mixing_time, tv_curve
from .reps import nontrivial_irreps
from .rng import stream
from .stats import value_counts


@dataclass
class ExperimentConfig:
    """Knobs shared by the experiment runners; JSON round-trips via asdict."""

    group: str = "c2"
    n_values: list[int] = field(default_factory=lambda: [128, 256])
    seed: int = 0
    replicas: int = 200
    betas: list[float] = field(default_factory=lambda: [-8, -6, -4, -2, 0, 2, 4, 6, 8])
    r_value: float = 2.0
    out_dir: str = "results"
    mode: str = "auto"           # exact | mc | auto
    persistence_cap: int = 20_000

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        cfg = cls()
        for key, val in data.items():
            if not hasattr(cfg, key):
                raise KeyError(f"unknown config field {key!r}")
            setattr(cfg, key, val)
        return cfg

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "config": asdict(cfg),
    }


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def _wilson_upper99(successes: int, trials: int) -> float:
    if trials == 0:
        return 1.0
    z = 2.576
    p = successes / trials
    denom = 1 + z * z / trials
    center = p + z * z / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return min(1.0, (center + half) / denom)


def _subgroup_outside_matrix(group: FiniteGroup) -> np.ndarray:
    """0/1 matrix, one row per proper subgroup, marking elements outside it."""
    subs = group.proper_subgroups
    out = np.zeros((len(subs), group.order), dtype=np.int64)
    for i, sub in enumerate(subs):
        for a in range(group.order):
            out[i, a] = 0 if sub.contains(a) else 1
    return out


def _escape_times(group: FiniteGroup, start_counts: np.ndarray, frac: Fraction,
                  replicas: int, t_max: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Hitting times of the spread set (outside-count >= frac*n for every
    proper subgroup); also returns the final count vectors at the hit."""
    batch = CountChainBatch(group, start_counts, replicas, rng)
    outside = _subgroup_outside_matrix(group)
    n = batch.n
    num, den = frac.numerator, frac.denominator
    taus = np.full(replicas, t_max + 1, dtype=np.int64)
    hit_state = np.zeros((replicas, group.order), dtype=np.int64)
    alive = np.ones(replicas, dtype=bool)
    t = 0
    while True:
        vc = batch.counts[:, 0, :]
        inside = (den * (vc @ outside.T) >= num * n).all(axis=1)
        newly = alive & inside
        if newly.any():
            taus[newly] = t
            hit_state[newly] = vc[newly]
            alive &= ~inside
        if not alive.any() or t >= t_max:
            break
        batch.step()
        t += 1
    hit_state[alive] = batch.counts[alive, 0, :]
    return taus, hit_state


def run_burnin(cfg: ExperimentConfig) -> dict:
    """Empirical law of the time to escape subgroup confinement, tails
    against 120 Q / beta^2, and persistence after the escape."""
    group = build_group(cfg.group)
    q = group.order
    rows = []
    persistence_rows = []
    any_violation = False
    for idx, n in enumerate(cfg.n_values):
        rng = stream(cfg.seed, idx)
        start = value_counts(worst_case_start(group, n))
        betas = sorted(b for b in cfg.betas if b > 0)
        t_max = int(n * math.log(n) + (max(betas) + 4) * n) if betas else 4 * n
        taus, hit_states = _escape_times(group, start, Fraction(1, 3),
                                         cfg.replicas, t_max, rng)
        for beta in betas:
            thr = n * math.log(n) + beta * n
            exceed = int((taus > thr).sum())
            tail = exceed / cfg.replicas
            upper = _wilson_upper99(exceed, cfg.replicas)
            bound = 120.0 * q / beta ** 2
            violated = upper > bound and bound < 1.0
            any_violation |= violated
            rows.append([n, beta, tail, upper, bound, int(violated)])

        # persistence: continue from the hitting states, watch the 1/6 level
        horizon = min(n * n, cfg.persistence_cap)
        batch = CountChainBatch(group, start, cfg.replicas, rng)
        batch.counts[:, 0, :] = hit_states
        batch.flat = batch.counts.reshape(cfg.replicas, -1)
        outside = _subgroup_outside_matrix(group)
        bad = 0
        for _ in range(horizon):
            batch.step()
            vc = batch.counts[:, 0, :]
            ok = (6 * (vc @ outside.T) >= n).all(axis=1)
            bad += int((~ok).sum())
        persistence_rows.append([n, horizon, cfg.replicas, bad])
        any_violation |= bad > 0

    _write_csv(Path(cfg.out_dir) / "burnin_tails.csv",
               ["n", "beta", "tail", "tail_upper99", "bound", "violated"], rows)
    _write_csv(Path(cfg.out_dir) / "burnin_persistence.csv",
               ["n", "horizon", "replicas", "violations"], persistence_rows)
    summary = {
        "experiment": "burnin",
        "rows": len(rows),
        "bound_violations": any_violation,
        "persistence": persistence_rows,
        "metadata": _metadata(cfg),
    }
    _write_json(Path(cfg.out_dir) / "burnin_summary.json", summary)
    return summary


def _near_uniform_mask(vc: np.ndarray, n: int, tol: float) -> np.ndarray:
    q = vc.shape[1]
    dist2 = ((vc / n - 1.0 / q) ** 2).sum(axis=1)
    return dist2 <= tol * tol


def run_lower_bound(cfg: ExperimentConfig) -> dict:
    """Late-concentration checks from the worst-case start: identity sites
    persist for almost n log n steps, and the chain still misses the
    near-uniform ball where the stationary law concentrates."""
    group = build_group(cfg.group)
    q = group.order
    r_val = cfg.r_value
    rows_a = []
    rows_b = []
    station_rows = []
    any_violation = False
    for idx, n in enumerate(cfg.n_values):
        rng = stream(cfg.seed, 1000 + idx)
        start = value_counts(worst_case_start(group, n))
        t1 = int(math.floor(n * math.log(n) - r_val * n))
        batch = CountChainBatch(group, start, cfg.replicas, rng)
        for _ in range(max(t1, 0)):
            batch.step()
        vc = batch.counts[:, 0, :]
        nonid = n - vc[:, 0]
        hits = int((3 * nonid >= n).sum())
        tail = hits / cfg.replicas
        upper = _wilson_upper99(hits, cfg.replicas)
        bound = 4.0 * q * q / r_val ** 2
        violated = upper > bound and bound < 1.0
        any_violation |= violated
        rows_a.append([n, r_val, max(t1, 0), tail, upper, bound, int(violated)])

        # stationary concentration pi(not near-uniform(R/sqrt n)), decreasing in R
        stat_counts = np.stack([
            value_counts(sample_stationary(group, n, rng))
            for _ in range(cfg.replicas)])
        prev = 1.0
        mono = True
        for r_grid in (1.0, 2.0, 4.0, 8.0):
            frac_out = 1.0 - _near_uniform_mask(stat_counts, n, r_grid / math.sqrt(n)).mean()
            mono &= frac_out <= prev + 1e-12
            prev = frac_out
            station_rows.append([n, r_grid, frac_out])
        any_violation |= not mono

        # part (b): TV lower bound from the near-uniform ball statistic
        for beta in sorted(b for b in cfg.betas if b > 0):
            t2 = int(math.floor(0.5 * n * math.log(n) - beta * n))
            if t2 <= 0:
                continue
            extra = t2  # continue the same replicas to time t1 + t2
            bb = CountChainBatch(group, start, cfg.replicas,
                                 stream(cfg.seed, 2000 + idx))
            for _ in range(max(t1, 0) + extra):
                bb.step()
            tol = beta / math.sqrt(n)
            p_chain = _near_uniform_mask(bb.counts[:, 0, :], n, tol).mean()
            p_stat = _near_uniform_mask(stat_counts, n, tol).mean()
            se = math.sqrt(p_chain * (1 - p_chain) / cfg.replicas)
            se += math.sqrt(p_stat * (1 - p_stat) / cfg.replicas)
            tv_lower = max(0.0, p_stat - p_chain - 2.576 * se)
            rows_b.append([n, beta, max(t1, 0) + extra, p_chain, p_stat, tv_lower])

    _write_csv(Path(cfg.out_dir) / "lower_bound_identity.csv",
               ["n", "R", "t1", "tail", "tail_upper99", "bound", "violated"], rows_a)
    _write_csv(Path(cfg.out_dir) / "lower_bound_tv.csv",
               ["n", "beta", "t", "p_chain", "p_stationary", "tv_lower"], rows_b)
    _write_csv(Path(cfg.out_dir) / "stationary_concentration.csv",
               ["n", "R", "fraction_outside"], station_rows)
    summary = {
        "experiment": "lower_bound",
        "bound_violations": any_violation,
        "metadata": _metadata(cfg),
    }
    _write_json(Path(cfg.out_dir) / "lower_bound_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# Fourier decay


def _row_coeff_norms(counts: np.ndarray, row_sums: np.ndarray, repset) -> np.ndarray:
    """max over rows and irreps of the Hilbert-Schmidt norm of the row
    Fourier coefficient, per replica."""
    props = counts / row_sums[None, :, None]
    best = np.zeros(counts.shape[0])
    for rep in repset:
        # y[r, a] = sum_b props[r, a, b] rho(b): shape (B, rows, d, d)
        y = np.tensordot(props, rep.matrices, axes=([2], [0]))
        norms = np.sqrt((np.abs(y) ** 2).sum(axis=(2, 3)))
        best = np.maximum(best, norms.max(axis=1))
    return best


def run_fourier_decay(cfg: ExperimentConfig) -> dict:
    """Decay of the row Fourier coefficients from a typical reference.

    The reference is one stationary draw conditioned to be near-uniform; all
    replicas start at it, so the tracked coefficients begin at norm sqrt(d)
    and should contract at rate about 1/n per step until the sqrt(n) noise
    floor. The fitted log-slope over the first e-fold of decay is reported
    against the [-1.25/n, -0.75/n] target band.
    """
    group = build_group(cfg.group)
    repset = nontrivial_irreps(group)
    q = group.order
    results = []
    rows_csv = []
    exceed_rows = []
    any_violation = False
    for idx, n in enumerate(cfg.n_values):
        rng = stream(cfg.seed, 3000 + idx)
        # reference: stationary draw inside the near-uniform ball of radius 1/(4Q)
        while True:
            ref = sample_stationary(group, n, rng)
            rs = value_counts(ref)
            if (rs > 0).all() and math.sqrt(((rs / n - 1 / q) ** 2).sum()) <= 1 / (4 * q):
                break
        row_sums = rs.astype(np.int64)
        start = np.diag(row_sums).astype(np.int64)
        batch = CountChainBatch(group, start, cfg.replicas, rng)
        t_end = int(2.2 * n)
        grid = np.arange(0, t_end + 1, max(1, n // 60))
        series = np.zeros((len(grid), cfg.replicas))
        gi = 0
        for t in range(t_end + 1):
            if gi < len(grid) and t == grid[gi]:
                series[gi] = _row_coeff_norms(batch.counts, row_sums, repset)
                gi += 1
            if t < t_end:
                batch.step()
        mean = series.mean(axis=1)
        # fit over the first e-fold of decay of the replica mean
        mask = mean >= mean[0] / math.e
        ts = grid.astype(float)
        a_mat = np.vstack([ts[mask], np.ones(int(mask.sum()))]).T
        slope = float(np.linalg.lstsq(a_mat, np.log(mean[mask]), rcond=None)[0][0])
        lo, hi = -1.25 / n, -0.75 / n
        ok = lo <= slope <= hi
        any_violation |= not ok
        results.append({"n": n, "slope": slope, "slope_times_n": slope * n,
                        "band": [lo, hi], "ok": ok, "fit_points": int(mask.sum())})
        for g_t, m in zip(grid, mean):
            rows_csv.append([n, int(g_t), m])

        # continue to the half-log point and record the exceedance fractions
        t_half = int(math.ceil(0.5 * n * math.log(n)))
        for t in range(t_end, t_half):
            batch.step()
        final = _row_coeff_norms(batch.counts, row_sums, repset)
        prev = 1.0
        mono = True
        for r_grid in (1.0, 2.0, 3.0, 4.0, 6.0):
            frac = float((final > r_grid / math.sqrt(n)).mean())
            mono &= frac <= prev + 1e-12
            prev = frac
            exceed_rows.append([n, t_half, r_grid, frac])
        any_violation |= not mono

    _write_csv(Path(cfg.out_dir) / "fourier_decay.csv",
               ["n", "t", "mean_max_row_coeff"], rows_csv)
    _write_csv(Path(cfg.out_dir) / "fourier_exceedance.csv",
               ["n", "t", "R", "fraction_exceeding"], exceed_rows)
    summary = {
        "experiment": "fourier_decay",
        "fits": results,
        "bound_violations": any_violation,
        "metadata": _metadata(cfg),
    }
    _write_json(Path(cfg.out_dir) / "fourier_decay_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# cutoff profile


def exact_profile(group: FiniteGroup, n: int, betas) -> dict:
    """Exact lumped TV values on the window grid t = (3/2) n ln n + beta n."""
    start_cfg = worst_case_start(group, n)
    rows = value_counts(start_cfg)
    chain = build_lumped(group, n, rows)
    center = 1.5 * n * math.log(n)
    t_max = int(center + max(betas) * n) + 1
    curve = tv_curve(chain, diag_start(chain), t_max)
    prof = {}
    for beta in betas:
        t = int(center + beta * n)
        prof[beta] = float(curve[t]) if 0 <= t <= t_max else 1.0
    return {"n": n, "profile": prof, "curve": curve, "chain": chain}


def run_cutoff_profile(cfg: ExperimentConfig) -> dict:
    """Total-variation profile around (3/2) n log n.

    Exact mode iterates the lumped chain; Monte Carlo mode brackets the
    distance between a statistic-based lower bound and a coalescence-based
    upper bound, each labeled with its method.
    """
    group = build_group(cfg.group)
    betas = sorted(cfg.betas)
    rows_csv = []
    profiles = {}
    mixing = []
    any_violation = False
    use_exact = cfg.mode in ("exact", "auto")
    for idx, n in enumerate(cfg.n_values):
        center = 1.5 * n * math.log(n)
        exact_done = False
        if use_exact:
            try:
                res = exact_profile(group, n, betas)
                profiles[n] = res["profile"]
                for beta in betas:
                    t = int(center + beta * n)
                    rows_csv.append([n, beta, t, res["profile"][beta], "exact-lumped"])
                tmix = mixing_time(res["chain"], diag_start(res["chain"]), 0.25)
                mixing.append({"n": n, "t_mix_quarter": tmix,
                               "ratio": tmix / (n * math.log(n))})
                exact_done = True
            except StateBudgetExceeded:
                if cfg.mode == "exact":
                    raise
        if not exact_done:
            mc = _mc_profile(group, n, betas, cfg, idx)
            for beta in betas:
                t = int(center + beta * n)
                rows_csv.append([n, beta, t, mc["lower"][beta], "mc-lower"])
                rows_csv.append([n, beta, t, mc["upper"][beta], "mc-upper"])

    collapse = None
    if len(profiles) >= 2:
        spread = 0.0
        for beta in betas:
            vals = [profiles[n][beta] for n in profiles]
            spread = max(spread, max(vals) - min(vals))
        collapse = spread
        any_violation |= spread > 0.1

    _write_csv(Path(cfg.out_dir) / "cutoff_profile.csv",
               ["n", "beta", "t", "d_estimate", "method"], rows_csv)
    summary = {
        "experiment": "cutoff_profile",
        "mixing_times": mixing,
        "profile_spread": collapse,
        "bound_violations": any_violation,
        "metadata": _metadata(cfg),
    }
    _write_json(Path(cfg.out_dir) / "cutoff_summary.json", summary)
    return summary


def _first_irrep_statistic(group: FiniteGroup, counts: np.ndarray, n: int) -> np.ndarray:
    """Normalized real trace of the first irrep's transform, per replica."""
    repset = nontrivial_irreps(group)
    rep = repset.irreps[0]
    traces = np.trace(rep.matrices, axis1=1, axis2=2).real
    return (counts @ traces) / (n * rep.dim)


def _mc_profile(group: FiniteGroup, n: int, betas, cfg: ExperimentConfig,
                idx: int) -> dict:
    """Monte Carlo bracket: scalar-statistic lower bound and coalescence
    upper bound at each grid time."""
    q = group.order
    center = 1.5 * n * math.log(n)
    rng = stream(cfg.seed, 4000 + idx)
    reps = cfg.replicas
    start = value_counts(worst_case_start(group, n))
    stat_samples = np.stack([
        value_counts(sample_stationary(group, n, rng)) for _ in range(reps)])
    z_stat = _first_irrep_statistic(group, stat_samples, n)

    lower = {}
    batch = CountChainBatch(group, start, reps, rng)
    t_now = 0
    ks_crit = 1.628 * math.sqrt(2.0 / reps)  # two-sample 99% quantile
    for beta in betas:
        t = max(int(center + beta * n), 0)
        for _ in range(t - t_now):
            batch.step()
        t_now = max(t_now, t)
        z_chain = _first_irrep_statistic(group, batch.counts[:, 0, :], n)
        ks = _ks_statistic(z_chain, z_stat)
        lower[beta] = max(0.0, ks - ks_crit)

    # upper bound: after t - ceil(beta_c n) independent steps, freeze the
    # chain's own state as reference and couple against a stationary partner
    upper = {}
    try:
        delta = pick_coupling_delta(n, q)
    except NoValidDelta:
        delta = _fallback_delta(n, q)
    for beta in betas:
        t = max(int(center + beta * n), 0)
        tail_budget = max(int(0.5 * beta * n), n)
        pre = max(t - tail_budget, 0)
        fails = 0
        for rep_i in range(max(reps // 4, 20)):
            rr = stream(cfg.seed, 5000 + 97 * idx + rep_i)
            b1 = CountChainBatch(group, start, 1, rr)
            for _ in range(pre):
                b1.step()
            ref_counts = b1.counts[0, 0, :].copy()
            if (ref_counts == 0).any():
                fails += 1
                continue
            first = PairCounts(tuple(ref_counts), np.diag(ref_counts))
            second = sample_stationary_pair_counts(group, ref_counts, rr)
            state = CoupledState(group, first, second, delta)
            from .coupling import _run_to_coalescence
            tau = _run_to_coalescence(state, tail_budget, rr)
            if tau > tail_budget:
                fails += 1
        trials = max(reps // 4, 20)
        upper[beta] = _wilson_upper99(fails, trials)
    return {"lower": lower, "upper": upper}


def _fallback_delta(n: int, q: int) -> Fraction:
    """Largest delta <= 1/(2 Q^2) with an integral core size."""
    for m in range(math.ceil(n * (1 - Fraction(1, 2 * q * q)) / q ** 2), n // q ** 2 + 1):
        delta = 1 - Fraction(m * q * q, n)
        if 0 < delta <= Fraction(1, 2 * q * q):
            return delta
    raise NoValidDelta(f"no coupling parameter at all for n={n}, Q={q}")


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    allv = np.concatenate([a, b])
    allv.sort()
    fa = np.searchsorted(np.sort(a), allv, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), allv, side="right") / len(b)
    return float(np.abs(fa - fb).max())


RUNNERS = {
    "cutoff": run_cutoff_profile,
    "burnin": run_burnin,
    "fourier-decay": run_fourier_decay,
    "lower-bound": run_lower_bound,
}
