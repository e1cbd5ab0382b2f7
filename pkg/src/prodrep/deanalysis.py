"""Standalone numerics behind the averaging-phase analysis.

Four independently testable pieces: the exponentially smoothed norm
surrogate and its gradient; a harness that drives a generic contracting
stochastic difference equation and checks its supermartingale/tail
behavior; per-step residual extraction for the Fourier-coefficient
recursions; and the scalar comparison process that certifies the mixing
lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoiseBoundViolated, PreconditionViolated
from .reps import Irrep, RepSet, drift_matrix, fourier_coefficient
from .stats import value_counts


# ---------------------------------------------------------------------------
# smoothed norm


def _realify(x) -> np.ndarray:
    """Flatten to real coordinates; complex entries contribute two each."""
    arr = np.atleast_1d(np.asarray(x))
    if np.iscomplexobj(arr):
        return arr.view(float).reshape(-1)
    return arr.astype(float).reshape(-1)


def smoothed_norm(x, n: int) -> float:
    """||x|| + exp(-sqrt(n)||x||)/sqrt(n) - 1/sqrt(n).

    Behaves like the norm away from zero but is twice differentiable at the
    origin, with Hessian bounded by sqrt(n); vanishes at zero.
    """
    r = float(np.linalg.norm(_realify(x)))
    s = math.sqrt(n)
    return r + math.exp(-s * r) / s - 1.0 / s


def smoothed_norm_grad(x, n: int) -> np.ndarray:
    """Gradient as a real vector over the realified coordinates; zero at 0."""
    xr = _realify(x)
    r = float(np.linalg.norm(xr))
    if r == 0.0:
        return np.zeros_like(xr)
    return (1.0 - math.exp(-math.sqrt(n) * r)) * xr / r


def smoothed_norm_grad_norm(x, n: int) -> float:
    """Closed form 1 - exp(-sqrt(n)||x||); always at most 1."""
    r = float(np.linalg.norm(_realify(x)))
    return 1.0 - math.exp(-math.sqrt(n) * r)


# ---------------------------------------------------------------------------
# generic contracting difference equation


@dataclass
class ContractionInstance:
    """z(t+1) = clip(z(t) - eps*phi(t+1)*z(t) + M(t+1)) with noise obeying
    E[M | past] <= d_bound * eps^{3/2} and |M| <= d_bound * eps.

    ``noise(z, t, rng)`` draws M(t+1); it must also keep z inside [0, 1]
    from below (the harness verifies the declared bounds sample by sample).
    """

    epsilon: float
    phi: Callable[[float], float]
    d_bound: float
    noise: Callable[[float, int, object], float]
    z0: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise PreconditionViolated("epsilon must lie in (0,1)")
        if not 0 <= self.z0 <= 1:
            raise PreconditionViolated("z0 must lie in [0,1]")


def symmetric_noise(d_bound: float, epsilon: float, phi):
    """Noise uniform on [-m, m], m = min(d_bound*eps, available room below),
    so the state stays nonnegative without clamping from below."""

    def gen(z, t, rng):
        room = (1.0 - epsilon * phi(t + 1.0)) * z
        m = min(d_bound * epsilon, room)
        return float(rng.uniform(-m, m)) if m > 0 else 0.0

    return gen


@dataclass
class HarnessReport:
    tail_estimate: float
    threshold: float
    supermartingale_mean_increment: float
    supermartingale_se: float
    phi_integral: float
    phi_sum_lower: float

    @property
    def supermartingale_ok(self) -> bool:
        return (self.supermartingale_mean_increment
                <= 4.0 * self.supermartingale_se + 1e-12)


def run_contraction_harness(inst: ContractionInstance, t_end: int, lam: float,
                            replicas: int, rng) -> HarnessReport:
    """Empirical Pr(z(t) >= lam*sqrt(eps) + exp(-eps*int(phi)) z(0)) plus a
    mean-increment test of the compensated exponential supermartingale."""
    eps = inst.epsilon
    d = inst.d_bound
    # Phi(t) = eps^{-1} sum log 1/(1 - eps*phi(k)), stable via log1p
    phis = np.array([inst.phi(float(k)) for k in range(1, t_end + 1)])
    if np.any(phis <= 0) or np.any(phis > 1):
        raise PreconditionViolated("phi must map into (0, 1]")
    if np.any(np.diff(phis) < -1e-12):
        raise PreconditionViolated("phi must be non-decreasing")
    log_terms = -np.log1p(-eps * phis)
    phi_big = np.concatenate([[0.0], np.cumsum(log_terms)]) / eps
    phi0 = inst.phi(0.0)

    grid = np.arange(0.0, float(t_end) + 0.5)
    phi_integral = float(np.trapezoid([inst.phi(s) for s in grid], grid))
    threshold = lam * math.sqrt(eps) + math.exp(-eps * phi_integral) * inst.z0

    exceed = 0
    incs = []
    for rep in range(replicas):
        z = inst.z0
        zsm_prev = math.exp(eps * phi_big[0]) * (z - d * math.sqrt(eps) / phi0)
        for t in range(t_end):
            m = inst.noise(z, t, rng)
            if abs(m) > d * eps + 1e-12:
                raise NoiseBoundViolated(f"|M|={m} exceeds {d * eps}")
            z = z - eps * inst.phi(t + 1.0) * z + m
            z = min(z, 1.0)
            if z < -1e-12:
                raise NoiseBoundViolated("state left [0,1] from below")
            z = max(z, 0.0)
            zsm = math.exp(eps * phi_big[t + 1]) * (z - d * math.sqrt(eps) / phi0)
            incs.append(zsm - zsm_prev)
            zsm_prev = zsm
        if z >= threshold:
            exceed += 1
    incs = np.asarray(incs)
    return HarnessReport(
        tail_estimate=exceed / replicas,
        threshold=threshold,
        supermartingale_mean_increment=float(incs.mean()),
        supermartingale_se=float(incs.std(ddof=1) / math.sqrt(len(incs))),
        phi_integral=phi_integral,
        phi_sum_lower=float(phi_big[-1]),
    )


# ---------------------------------------------------------------------------
# Fourier drift residuals along a trajectory


@dataclass
class ResidualSeries:
    """Per-step residuals of the Fourier-coefficient recursion.

    The residual at t is x(t+1) - x(t) - x(t) X(t) with X the drift matrix;
    its conditional mean absorbs only the O(1/n^2) self-pair term of the
    count dynamics, so time averages are statistically zero.
    """

    norms: np.ndarray
    residuals: list[np.ndarray]
    bound: float
    max_two_route_gap: float

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())


def fourier_residuals(count_vectors: np.ndarray, rep: Irrep, group,
                      n: int) -> ResidualSeries:
    """Residuals of the proportion-vector recursion along recorded counts.

    Each residual is computed twice: from the matrix recursion and from
    transforming the per-element count residuals; the routes must agree to
    rounding. The pathwise bound is 2 Q sqrt(d) / n.
    """
    q = group.order
    counts = np.asarray(count_vectors, dtype=np.int64)
    mats = rep.matrices
    norms = []
    residuals = []
    max_gap = 0.0
    x_prev = np.tensordot(counts[0] / n, mats, axes=1)
    for t in range(len(counts) - 1):
        x_next = np.tensordot(counts[t + 1] / n, mats, axes=1)
        xmat = drift_matrix(x_prev, n)
        res_matrix = x_next - x_prev - x_prev @ xmat

        # second route: residual of each count equation, then transform
        drift_counts = _count_drift(counts[t], group, n)
        m_a = (counts[t + 1] - counts[t]) - drift_counts
        res_counts = np.tensordot(m_a / n, mats, axes=1)
        gap = float(np.abs(res_matrix - res_counts).max())
        max_gap = max(max_gap, gap)

        residuals.append(res_matrix)
        norms.append(float(np.linalg.norm(res_matrix)))
        x_prev = x_next
    bound = 2.0 * q * math.sqrt(rep.dim) / n
    return ResidualSeries(np.asarray(norms), residuals, bound, max_gap)


def _count_drift(counts: np.ndarray, group, n: int) -> np.ndarray:
    """Pair-sum drift of the count vector (self-pairs included, matching the
    matrix recursion)."""
    q = group.order
    out = np.empty(q)
    c = counts.astype(float)
    for a in range(q):
        s = 0.0
        for b in range(q):
            s += c[group.mult[a, group.inv[b]]] * c[b]
            s += c[group.mult[a, b]] * c[b]
        out[a] = s / (2 * n * (n - 1)) - c[a] / n
    return out


def conditional_mean_report(residuals: list[np.ndarray], buckets) -> dict:
    """Group residual entries by a state bucket and flag any bucket whose
    mean is more than four standard errors from zero."""
    by_bucket: dict[object, list[complex]] = {}
    for res, key in zip(residuals, buckets):
        by_bucket.setdefault(key, []).append(complex(res.reshape(-1)[0]))
    report = {}
    for key, vals in by_bucket.items():
        arr = np.asarray(vals)
        if len(arr) < 10:
            continue
        mean = arr.mean()
        se = arr.std(ddof=1) / math.sqrt(len(arr))
        report[key] = {"mean": abs(mean), "se": float(se),
                       "ok": abs(mean) <= 4.0 * float(se) + 1e-12}
    return report


# ---------------------------------------------------------------------------
# lower-bound comparison process


@dataclass
class ComparisonReport:
    z_series: np.ndarray
    w_series: np.ndarray
    violations: int

    @property
    def final_w(self) -> float:
        return float(self.w_series[-1])


def lower_comparison(count_vectors: np.ndarray, rep: Irrep, group,
                     n: int) -> ComparisonReport:
    """Couple the trace statistic z(t) with the linear comparison w(t).

    z is the normalized real trace of the Fourier coefficient; w starts at
    1/3 and contracts by (1 - 1/n) with the same extracted noise. Because
    the quadratic drift term of z is nonnegative, z dominates w pathwise;
    the report counts violations, which must be zero up to rounding.
    """
    counts = np.asarray(count_vectors, dtype=np.int64)
    q = group.order
    nonid = int(counts[0].sum() - counts[0, 0])
    if 3 * nonid > counts[0].sum():
        raise PreconditionViolated("start must hold the identity on 2/3 of sites")
    mats = rep.matrices
    d = rep.dim
    zs = np.empty(len(counts))
    ws = np.empty(len(counts))
    x = np.tensordot(counts[0] / n, mats, axes=1)
    z = float(np.trace(x + x.conj().T).real / (2 * d))
    zs[0] = z
    w = 1.0 / 3.0
    ws[0] = w
    violations = 0
    for t in range(len(counts) - 1):
        herm = (x + x.conj().T) / 2.0
        quad = float(np.trace(herm @ herm).real) / d
        drift = quad / (n - 1) - z / n
        x = np.tensordot(counts[t + 1] / n, mats, axes=1)
        z_next = float(np.trace(x + x.conj().T).real / (2 * d))
        m = z_next - zs[t] - drift
        w = (1.0 - 1.0 / n) * w + m
        z = z_next
        zs[t + 1] = z
        ws[t + 1] = w
        if z < w - 1e-9:
            violations += 1
    return ComparisonReport(zs, ws, violations)
