import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prodrep import chain, deanalysis as da, groups, reps, stats
from prodrep.errors import NoiseBoundViolated, PreconditionViolated
from prodrep.rng import stream


def record_counts(group, start_cfg, steps, rng):
    cur = start_cfg.copy()
    out = [stats.value_counts(cur)]
    for _ in range(steps):
        i, j, s = chain.sample_move(cur.n, rng)
        chain.apply_move(cur, i, j, s)
        out.append(stats.value_counts(cur))
    return np.array(out)


# ---------------------------------------------------------------------------
# smoothed norm


def test_smoothed_norm_values():
    n = 100
    assert da.smoothed_norm(np.zeros(3), n) == 0.0
    x = np.zeros(4)
    x[0] = 1.0
    want = 1 + math.exp(-10) / 10 - 0.1
    assert abs(da.smoothed_norm(x, n) - want) < 1e-15
    assert np.allclose(da.smoothed_norm_grad(np.zeros(5), n), 0.0)


@given(st.integers(2, 8), st.integers(0, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_smoothed_norm_between_zero_and_norm(dim, seed):
    rng = stream(seed, 0)
    x = rng.normal(size=dim)
    val = da.smoothed_norm(x, 64)
    assert 0.0 <= val <= np.linalg.norm(x) + 1e-15


def test_gradient_matches_finite_differences():
    rng = stream(201, 0)
    n = 100
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 9))
        x = rng.normal(size=dim)
        g = da.smoothed_norm_grad(x, n)
        h = 1e-6 * np.linalg.norm(x)
        fd = np.array([
            (da.smoothed_norm(x + h * e, n) - da.smoothed_norm(x - h * e, n)) / (2 * h)
            for e in np.eye(dim)])
        worst = max(worst, np.abs(fd - g).max() / np.linalg.norm(g))
        assert abs(np.linalg.norm(g) - da.smoothed_norm_grad_norm(x, n)) < 1e-12
        assert np.linalg.norm(g) <= 1.0
    assert worst <= 1e-6


def test_second_order_upper_bound():
    rng = stream(202, 0)
    n = 81
    for _ in range(10_000):
        dim = int(rng.integers(2, 9))
        x = rng.normal(size=dim) * rng.uniform(0, 2)
        h = rng.normal(size=dim) * rng.uniform(0, 0.5)
        lhs = da.smoothed_norm(x + h, n)
        rhs = (da.smoothed_norm(x, n) + h @ da.smoothed_norm_grad(x, n)
               + math.sqrt(n) / 2 * h @ h)
        assert lhs <= rhs + 1e-12


# ---------------------------------------------------------------------------
# contraction harness


def test_noise_free_decay_is_exact():
    inst = da.ContractionInstance(0.02, lambda t: 1.0, 0.0,
                                  lambda z, t, r: 0.0, 1.0)
    rep = da.run_contraction_harness(inst, 300, 0.5, 10, stream(203, 0))
    assert rep.tail_estimate == 0.0
    assert rep.phi_sum_lower >= rep.phi_integral - 1e-9
    assert rep.supermartingale_ok


def test_stochastic_instance_tail_and_supermartingale():
    eps = 0.01
    phi = lambda t: 0.5
    inst = da.ContractionInstance(eps, phi, 1.0,
                                  da.symmetric_noise(1.0, eps, phi), 0.9)
    rep = da.run_contraction_harness(inst, 400, 3.0, 400, stream(204, 0))
    assert rep.tail_estimate < 0.1
    assert rep.supermartingale_ok


def test_growing_rate_function_allowed():
    eps = 0.05
    phi = lambda t: min(1.0, 0.2 + t / 1000.0)
    inst = da.ContractionInstance(eps, phi, 0.5,
                                  da.symmetric_noise(0.5, eps, phi), 1.0)
    rep = da.run_contraction_harness(inst, 200, 2.0, 100, stream(205, 0))
    assert rep.phi_sum_lower >= rep.phi_integral - 1e-9
    assert rep.supermartingale_ok


def test_noise_bound_violation_detected():
    eps = 0.01
    inst = da.ContractionInstance(eps, lambda t: 1.0, 1.0,
                                  lambda z, t, r: 10 * eps, 0.5)
    with pytest.raises(NoiseBoundViolated):
        da.run_contraction_harness(inst, 50, 1.0, 2, stream(206, 0))


def test_bad_parameters_rejected():
    with pytest.raises(PreconditionViolated):
        da.ContractionInstance(1.5, lambda t: 1.0, 1.0, lambda z, t, r: 0.0, 0.5)
    with pytest.raises(PreconditionViolated):
        da.ContractionInstance(0.1, lambda t: 1.0, 1.0, lambda z, t, r: 0.0, 2.0)
    eps = 0.1
    dec = da.ContractionInstance(eps, lambda t: 1.0 / (1.0 + t), 1.0,
                                 lambda z, t, r: 0.0, 0.5)
    with pytest.raises(PreconditionViolated):
        da.run_contraction_harness(dec, 20, 1.0, 2, stream(207, 0))


# ---------------------------------------------------------------------------
# Fourier residuals


def test_residual_routes_agree_and_bound_holds():
    g = groups.cyclic(2)
    rep = reps.nontrivial_irreps(g).irreps[0]
    n = 100
    counts = record_counts(g, chain.worst_case_start(g, n), 20_000, stream(208, 0))
    series = da.fourier_residuals(counts, rep, g, n)
    assert series.max_two_route_gap <= 1e-14
    assert series.max_norm <= series.bound
    assert series.bound == pytest.approx(0.04)


def test_residual_mean_statistically_zero():
    g = groups.cyclic(3)
    rs = reps.nontrivial_irreps(g)
    n = 60
    rng = stream(209, 0)
    start = chain.sample_stationary(g, n, rng)
    counts = record_counts(g, start, 30_000, rng)
    for rep in rs.irreps:
        series = da.fourier_residuals(counts, rep, g, n)
        flat = np.array([r[0, 0] for r in series.residuals])
        for part in (flat.real, flat.imag):
            se = part.std(ddof=1) / math.sqrt(len(part))
            assert abs(part.mean()) <= 4 * se + 1e-12
        # bucketed by sign of the scalar statistic
        zs = (counts[:-1] @ rep.character().real) / n
        buckets = np.sign(np.round(zs, 1))
        report = da.conditional_mean_report(series.residuals, buckets)
        assert report and all(item["ok"] for item in report.values())


def test_holding_step_residual_identity():
    # a holding move makes the residual exactly minus the drift term
    g = groups.cyclic(2)
    rep = reps.nontrivial_irreps(g).irreps[0]
    n = 10
    counts = np.array([[7, 3], [7, 3]])
    series = da.fourier_residuals(counts, rep, g, n)
    x = (7 - 3) / n
    xmat = reps.drift_matrix(np.array([[x + 0j]]), n)
    assert abs(series.residuals[0][0, 0] - (-(x * xmat[0, 0]))) < 1e-15


# ---------------------------------------------------------------------------
# comparison process


def one_third_start(g, n):
    sites = np.zeros(n, dtype=np.int64)
    sites[: n // 3] = 1
    return chain.Configuration(g, sites)


def test_comparison_starts_equal_and_never_crosses():
    g = groups.cyclic(2)
    rep = reps.nontrivial_irreps(g).irreps[0]
    n = 120
    horizon = int(n * math.log(n))
    for r in range(40):
        counts = record_counts(g, one_third_start(g, n), horizon, stream(210, r))
        rpt = da.lower_comparison(counts, rep, g, n)
        assert rpt.z_series[0] == pytest.approx(1 / 3)
        assert rpt.w_series[0] == pytest.approx(1 / 3)
        assert rpt.violations == 0
        assert np.all(rpt.z_series >= rpt.w_series - 1e-9)


def test_comparison_mean_matches_contraction_formula():
    # mean of w(T) across replicas within three standard errors of
    # (1 - 1/n)^T / 3, at a horizon where the size bias is inside the noise
    g = groups.cyclic(2)
    rep = reps.nontrivial_irreps(g).irreps[0]
    n = 150
    t_end = int(0.5 * n * math.log(n) - 2.0 * n)
    finals = []
    for r in range(600):
        counts = record_counts(g, one_third_start(g, n), t_end, stream(211, r))
        finals.append(da.lower_comparison(counts, rep, g, n).final_w)
    finals = np.array(finals)
    want = (1 - 1 / n) ** t_end / 3
    se = finals.std(ddof=1) / math.sqrt(len(finals))
    assert abs(finals.mean() - want) <= 3 * se


def test_comparison_requires_identity_heavy_start():
    g = groups.cyclic(2)
    rep = reps.nontrivial_irreps(g).irreps[0]
    counts = np.array([[2, 8], [2, 8]])
    with pytest.raises(PreconditionViolated):
        da.lower_comparison(counts, rep, g, 10)
