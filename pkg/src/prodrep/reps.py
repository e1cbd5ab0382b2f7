"""Unitary irreducible representations and Fourier analysis on a finite group.

Automatic tables exist for groups assembled from cyclic factors (character
products) and for the symmetric group on three letters; anything else needs
a representation file (see ``load_repset``). Norms are arranged so that the
squared Fourier norm of a proportion vector equals its squared Euclidean
distance from uniform (the Plancherel identity), which the validator checks.
"""
from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NotConverged, RepsUnavailable, ValidationFailed
from .groups import FiniteGroup

UNITARITY_TOL = 1e-10
HOMOMORPHISM_TOL = 1e-10
IRREDUCIBILITY_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-8


@dataclass(frozen=True)
class Irrep:
    """One nontrivial irreducible unitary representation.

    ``matrices[a]`` is the d x d complex matrix of element ``a``.
    """

    label: str
    dim: int
    matrices: np.ndarray

    def character(self) -> np.ndarray:
        return np.trace(self.matrices, axis1=1, axis2=2)


@dataclass(frozen=True)
class RepSet:
    """Complete set of nontrivial irreps of one group."""

    group: FiniteGroup
    irreps: tuple[Irrep, ...]

    def __iter__(self):
        return iter(self.irreps)

    def __len__(self):
        return len(self.irreps)


@dataclass
class FourierVector:
    """Fourier coefficients of a signal on the group, one matrix per irrep."""

    repset: RepSet
    coeffs: list[np.ndarray]


def validate_irrep(group: FiniteGroup, rep: Irrep) -> None:
    q = group.order
    mats = rep.matrices
    if mats.shape != (q, rep.dim, rep.dim):
        raise ValidationFailed(f"{rep.label}: matrix block has wrong shape")
    eye = np.eye(rep.dim)
    if not np.allclose(mats[0], eye, atol=HOMOMORPHISM_TOL):
        raise ValidationFailed(f"{rep.label}: identity element is not mapped to I")
    for a in range(q):
        if not np.allclose(mats[a] @ mats[a].conj().T, eye, atol=UNITARITY_TOL):
            raise ValidationFailed(f"{rep.label}: matrix of element {a} not unitary")
    prod = np.einsum("aij,bjk->abik", mats, mats)
    if not np.allclose(prod, mats[group.mult], atol=HOMOMORPHISM_TOL):
        raise ValidationFailed(f"{rep.label}: not a homomorphism")
    chi = rep.character()
    norm = np.vdot(chi, chi).real / q
    if abs(norm - 1.0) > IRREDUCIBILITY_TOL:
        raise ValidationFailed(f"{rep.label}: character norm {norm} != 1, not irreducible")
    if abs(chi.sum()) / q > ORTHOGONALITY_TOL:
        raise ValidationFailed(f"{rep.label}: not orthogonal to the trivial character")


def validate_repset(repset: RepSet) -> None:
    group = repset.group
    total = sum(r.dim ** 2 for r in repset.irreps)
    if total != group.order - 1:
        raise ValidationFailed(
            f"dimension check failed: sum d^2 = {total}, expected {group.order - 1}")
    for rep in repset.irreps:
        validate_irrep(group, rep)
    for r1, r2 in itertools.combinations(repset.irreps, 2):
        ip = np.vdot(r2.character(), r1.character()) / group.order
        if abs(ip) > ORTHOGONALITY_TOL:
            raise ValidationFailed(f"characters of {r1.label} and {r2.label} not orthogonal")


def nontrivial_irreps(group: FiniteGroup, rep_file=None) -> RepSet:
    """Complete validated set of nontrivial irreps.

    Available automatically for groups built from cyclic factors and for S3;
    other groups must supply a JSON representation file.
    """
    if rep_file is not None:
        return load_repset(group, rep_file)
    if group.cyclic_factors is not None:
        reps = _cyclic_product_characters(group.cyclic_factors)
    elif group.structure == ("symmetric", 3):
        reps = _s3_irreps()
    else:
        raise RepsUnavailable(
            f"no automatic representations for {group.name}; supply a rep file")
    repset = RepSet(group, tuple(reps))
    validate_repset(repset)
    return repset


def _cyclic_product_characters(factors) -> list[Irrep]:
    """Products of cyclic characters, indexed by a nonzero exponent tuple."""
    reps = []
    for exps in itertools.product(*(range(q) for q in factors)):
        if all(e == 0 for e in exps):
            continue
        vals = []
        for tup in itertools.product(*(range(q) for q in factors)):
            phase = sum(Fraction(a * l, q) for a, l, q in zip(tup, exps, factors))
            vals.append(cmath.exp(2j * cmath.pi * float(phase % 1)))
        label = "chi" + "".join(str(e) for e in exps)
        mats = np.array(vals, dtype=complex).reshape(-1, 1, 1)
        reps.append(Irrep(label, 1, mats))
    return reps


def _s3_irreps() -> list[Irrep]:
    perms = list(itertools.permutations(range(3)))
    sign = []
    for p in perms:
        inversions = sum(1 for i, j in itertools.combinations(range(3), 2) if p[i] > p[j])
        sign.append((-1) ** inversions)
    sign_rep = Irrep("sign", 1, np.array(sign, dtype=complex).reshape(-1, 1, 1))
    # standard 2-dim rep: permutation action restricted to the plane sum(x)=0
    u = np.array([[1 / math.sqrt(2), 1 / math.sqrt(6)],
                  [-1 / math.sqrt(2), 1 / math.sqrt(6)],
                  [0.0, -2 / math.sqrt(6)]])
    mats = []
    for p in perms:
        pm = np.zeros((3, 3))
        for k in range(3):
            pm[p[k], k] = 1.0
        mats.append(u.T @ pm @ u)
    std = Irrep("std", 2, np.array(mats, dtype=complex))
    return [sign_rep, std]


# ---------------------------------------------------------------------------
# representation files


def load_repset(group: FiniteGroup, path) -> RepSet:
    """Load irreps from JSON: a list of {label, dim, matrices} records.

    ``matrices`` is one entry per group element (in index order), each a
    d x d nested list of [re, im] pairs.
    """
    with open(path) as fh:
        data = json.load(fh)
    reps = []
    for rec in data:
        d = int(rec["dim"])
        mats = np.array(
            [[[complex(e[0], e[1]) for e in row] for row in mat] for mat in rec["matrices"]],
            dtype=complex).reshape(group.order, d, d)
        reps.append(Irrep(str(rec["label"]), d, mats))
    repset = RepSet(group, tuple(reps))
    validate_repset(repset)
    return repset


def dump_repset(repset: RepSet, path) -> None:
    data = []
    for rep in repset.irreps:
        mats = [[[[float(z.real), float(z.imag)] for z in row] for row in mat]
                for mat in rep.matrices]
        data.append({"label": rep.label, "dim": rep.dim, "matrices": mats})
    with open(path, "w") as fh:
        json.dump(data, fh)


# ---------------------------------------------------------------------------
# Fourier transform and norms


def fourier_coefficient(weights, rep: Irrep) -> np.ndarray:
    """sum_a weights[a] * rho(a) for a probability vector over the group."""
    w = np.asarray(weights, dtype=float)
    return np.tensordot(w, rep.matrices, axes=1)


def row_fourier_coefficient(row_weights, rep: Irrep) -> np.ndarray:
    """Same transform applied to one row of a pair-count proportion matrix."""
    return fourier_coefficient(row_weights, rep)


def transform(repset: RepSet, weights) -> FourierVector:
    return FourierVector(repset, [fourier_coefficient(weights, r) for r in repset])


def plancherel_norm_sq(x: FourierVector) -> float:
    """(1/Q) sum_rho d_rho ||x_rho||_HS^2.

    Equals the squared Euclidean distance of the transformed probability
    vector from uniform.
    """
    q = x.repset.group.order
    total = 0.0
    for rep, mat in zip(x.repset, x.coeffs):
        total += rep.dim * float(np.vdot(mat, mat).real)
    return total / q


def drift_matrix(x_rho: np.ndarray, n: int) -> np.ndarray:
    """One-step multiplicative drift acting on a Fourier coefficient.

    Hermitian, bounded below by -2/(n-1) times the identity.
    """
    d = x_rho.shape[0]
    herm = (x_rho + x_rho.conj().T) / 2.0
    return (herm - np.eye(d) * (n - 1) / n) / (n - 1)


def operator_norm(mat: np.ndarray) -> float:
    return float(np.linalg.svd(mat, compute_uv=False)[0])


# ---------------------------------------------------------------------------
# spectral-gap certificate


@dataclass(frozen=True)
class GapCertificate:
    """Worst-case top eigenvalue of the symmetrized transform over the
    constraint polytope, with a flag telling whether it is exact."""

    value: float
    certified: bool
    method: str
    argmax: tuple[float, ...] = field(default=())


def gap_certificate(repset: RepSet, rep: Irrep, c: float,
                    vertex_budget: int = 200_000) -> GapCertificate:
    """Maximize the top eigenvalue of sum_a mu(a) (rho(a)+rho(a)*)/2 over
    probability vectors mu with mu(H) <= 1-c for every proper subgroup H.

    The objective is convex in mu, so the maximum sits at a polytope vertex;
    for small instances all vertices are enumerated (certified). Larger
    instances fall back to a multi-start vertex-hopping search and are
    flagged as uncertified.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    group = repset.group
    q = group.order
    herm = (rep.matrices + np.conj(np.transpose(rep.matrices, (0, 2, 1)))) / 2.0

    def lam(mu):
        h = np.tensordot(mu, herm, axes=1)
        return float(np.linalg.eigvalsh(h)[-1])

    masks = [s.mask for s in group.proper_subgroups]
    # inequality rows: -mu_a <= 0, then sum_{a in H} mu_a <= 1-c
    rows = [-np.eye(q)[a] for a in range(q)]
    rhs = [0.0] * q
    for m in masks:
        ind = np.array([(m >> a) & 1 for a in range(q)], dtype=float)
        rows.append(ind)
        rhs.append(1.0 - c)
    rows = np.array(rows)
    rhs = np.array(rhs)
    n_ineq = len(rhs)

    n_combos = math.comb(n_ineq, q - 1)
    if n_combos <= vertex_budget:
        best, arg = -np.inf, None
        seen = set()
        ones = np.ones(q)
        for active in itertools.combinations(range(n_ineq), q - 1):
            a_mat = np.vstack([ones, rows[list(active)]])
            b_vec = np.concatenate([[1.0], rhs[list(active)]])
            try:
                mu = np.linalg.solve(a_mat, b_vec)
            except np.linalg.LinAlgError:
                continue
            if np.any(rows @ mu > rhs + 1e-9):
                continue
            key = tuple(np.round(mu, 9))
            if key in seen:
                continue
            seen.add(key)
            val = lam(mu)
            if val > best:
                best, arg = val, mu
        if arg is None:
            raise NotConverged("no feasible vertex found")
        if best >= 1.0 - 1e-12:
            raise NotConverged("certificate failed to separate the eigenvalue from 1")
        return GapCertificate(best, True, "vertex-enumeration", tuple(arg))

    # fallback: repeated linearization; each step maximizes a linear function
    # over the polytope, which scipy's LP solves at a vertex
    from scipy.optimize import linprog

    best, arg = -np.inf, None
    rng = np.random.default_rng(0)
    for start in range(32):
        mu = rng.dirichlet(np.ones(q))
        mu = np.clip(mu, 0, None)
        mu /= mu.sum()
        prev = -np.inf
        for _ in range(60):
            h = np.tensordot(mu, herm, axes=1)
            w, v = np.linalg.eigh(h)
            top = v[:, -1]
            grad = np.einsum("i,aij,j->a", top.conj(), herm, top).real
            res = linprog(-grad, A_ub=rows, b_ub=rhs, A_eq=np.ones((1, q)),
                          b_eq=[1.0], bounds=[(None, None)] * q, method="highs")
            if not res.success:
                break
            mu = res.x
            val = lam(mu)
            if val <= prev + 1e-12:
                break
            prev = val
        if prev > best:
            best, arg = prev, mu
    if arg is None:
        raise NotConverged("local search failed")
    return GapCertificate(best, False, "multi-start-search", tuple(arg))


def group_gap_certificate(repset: RepSet, c: float) -> GapCertificate:
    """Worst certificate over all nontrivial irreps."""
    certs = [gap_certificate(repset, rep, c) for rep in repset]
    worst = max(certs, key=lambda gc: gc.value)
    return GapCertificate(worst.value, all(gc.certified for gc in certs),
                          worst.method, worst.argmax)
