"""Finite groups as explicit multiplication tables.

Elements are integers ``0..Q-1`` with the identity always at index 0.
Groups are built from small specs (cyclic, direct products, symmetric,
dihedral) or loaded from a plain-text table file; every constructor runs
the full battery of group axioms before returning.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import NTooSmall, OrderCapExceeded, TableInvalid

ORDER_CAP = 64


@dataclass(frozen=True)
class Subgroup:
    """Subgroup stored as a membership bitmask over element indices."""

    mask: int

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def contains(self, a: int) -> bool:
        return bool((self.mask >> a) & 1)

    def elements(self) -> tuple[int, ...]:
        return tuple(a for a in range(self.mask.bit_length()) if (self.mask >> a) & 1)


@dataclass(frozen=True)
class GroupSpec:
    """Recipe for building a group.

    kind is one of "cyclic", "product", "symmetric", "dihedral", "table";
    params holds the modulus/degree, child specs, or a file path.
    """

    kind: str
    params: tuple = ()


class FiniteGroup:
    """Immutable finite group backed by a multiplication table.

    Safe to share across threads: nothing is mutated after construction
    (the lazily computed subgroup list is assembled once and cached).
    """

    def __init__(self, mult, name: str, cyclic_factors=None, structure=None):
        mult = np.asarray(mult, dtype=np.int64)
        _validate_table(mult)
        self.mult = mult
        self.mult.setflags(write=False)
        self.order = int(mult.shape[0])
        self.name = name
        self.identity = 0
        # inverse of a = the unique b with a*b = identity
        self.inv = np.argmin(np.abs(mult), axis=1).astype(np.int64)
        self.inv.setflags(write=False)
        if not np.all(mult[np.arange(self.order), self.inv] == 0):
            raise TableInvalid("inverse lookup failed")
        if not np.all(mult[self.inv, np.arange(self.order)] == 0):
            raise TableInvalid("left and right inverses disagree")
        # (q1, ..., qm) when the group was assembled from cyclic factors;
        # enables automatic character tables.
        self.cyclic_factors = tuple(cyclic_factors) if cyclic_factors else None
        self.structure = structure

    def __repr__(self):
        return f"FiniteGroup({self.name}, order={self.order})"

    def mul(self, a: int, b: int) -> int:
        return int(self.mult[a, b])

    def inverse(self, a: int) -> int:
        return int(self.inv[a])

    @cached_property
    def is_abelian(self) -> bool:
        return bool(np.array_equal(self.mult, self.mult.T))

    @cached_property
    def proper_subgroups(self) -> tuple[Subgroup, ...]:
        """All subgroups H strictly smaller than G, including the trivial one."""
        return tuple(Subgroup(m) for m in _enumerate_proper_subgroup_masks(self))

    def closure(self, elems) -> int:
        """Bitmask of the subgroup generated by ``elems`` (the identity if empty)."""
        return _closure_mask(self.mult, elems)


def _validate_table(mult: np.ndarray) -> None:
    if mult.ndim != 2 or mult.shape[0] != mult.shape[1]:
        raise TableInvalid("table must be square")
    q = mult.shape[0]
    if q == 0:
        raise TableInvalid("empty table")
    if q > ORDER_CAP:
        raise OrderCapExceeded(f"order {q} exceeds cap {ORDER_CAP}")
    if mult.min() < 0 or mult.max() >= q:
        raise TableInvalid("entries out of range")
    ar = np.arange(q)
    for axis, label in ((1, "row"), (0, "column")):
        sorted_lines = np.sort(mult, axis=axis)
        if not np.all(sorted_lines == (ar[None, :] if axis == 1 else ar[:, None])):
            raise TableInvalid(f"some {label} is not a permutation")
    if not (np.array_equal(mult[0], ar) and np.array_equal(mult[:, 0], ar)):
        raise TableInvalid("element 0 is not the identity")
    # associativity, exhaustive: (ab)c == a(bc)
    lhs = mult[mult, :]          # lhs[a,b,c] = (ab)c
    rhs = mult[:, mult]          # rhs[a,b,c] = a(bc)
    if not np.array_equal(lhs, rhs):
        raise TableInvalid("associativity fails")


def _closure_mask(mult: np.ndarray, elems) -> int:
    members = {0}
    frontier = set(int(e) for e in elems)
    members |= frontier
    while frontier:
        new = set()
        for a in frontier:
            for b in members:
                for p in (int(mult[a, b]), int(mult[b, a])):
                    if p not in members:
                        new.add(p)
        members |= new
        frontier = new
    mask = 0
    for a in members:
        mask |= 1 << a
    return mask


def generates(group: FiniteGroup, elems) -> bool:
    """True iff the closure of ``elems`` under products is the whole group."""
    full = (1 << group.order) - 1
    return group.closure(elems) == full


def _enumerate_proper_subgroup_masks(group: FiniteGroup) -> list[int]:
    q = group.order
    full = (1 << q) - 1
    # seed with all cyclic subgroups, then close under pairwise join
    masks = {group.closure([a]) for a in range(q)}
    masks.add(1)  # trivial subgroup
    changed = True
    while changed:
        changed = False
        for m1, m2 in itertools.combinations(sorted(masks), 2):
            join = group.closure(_mask_elements(m1 | m2))
            if join not in masks:
                masks.add(join)
                changed = True
    masks.discard(full)
    out = sorted(masks, key=lambda m: (m.bit_count(), m))
    for m in out:
        if q % m.bit_count() != 0:
            raise TableInvalid("subgroup size does not divide group order")
    return out


def _mask_elements(mask: int) -> list[int]:
    return [a for a in range(mask.bit_length()) if (mask >> a) & 1]


# ---------------------------------------------------------------------------
# constructors


def cyclic(q: int) -> FiniteGroup:
    if q < 1:
        raise TableInvalid("modulus must be positive")
    ar = np.arange(q)
    mult = (ar[:, None] + ar[None, :]) % q
    return FiniteGroup(mult, f"C{q}", cyclic_factors=(q,), structure=("cyclic", q))


def product(*groups: FiniteGroup) -> FiniteGroup:
    """Direct product; element index is mixed-radix over the factors."""
    if len(groups) < 1:
        raise TableInvalid("product needs at least one factor")
    g = groups[0]
    mult = g.mult
    factors = list(g.cyclic_factors) if g.cyclic_factors else None
    name = g.name
    for h in groups[1:]:
        qa, qb = mult.shape[0], h.order
        if qa * qb > ORDER_CAP:
            raise OrderCapExceeded(f"product order {qa * qb} exceeds cap {ORDER_CAP}")
        # (a1,a2)*(b1,b2) = (a1 b1, a2 b2); index = a1*qb + a2
        m = np.empty((qa * qb, qa * qb), dtype=np.int64)
        for a1 in range(qa):
            for a2 in range(qb):
                m[a1 * qb + a2] = (mult[a1][:, None] * qb + h.mult[a2][None, :]).reshape(-1)
        mult = m
        if factors is not None and h.cyclic_factors:
            factors.extend(h.cyclic_factors)
        else:
            factors = None
        name = f"{name}x{h.name}"
    return FiniteGroup(mult, name, cyclic_factors=factors,
                       structure=("product", tuple(g.structure for g in groups)))


def symmetric(k: int) -> FiniteGroup:
    """Symmetric group on k letters (k <= 4), composition p*q = p after q."""
    if k > 4:
        raise OrderCapExceeded("symmetric groups only shipped up to degree 4")
    perms = list(itertools.permutations(range(k)))  # identity first
    index = {p: i for i, p in enumerate(perms)}
    q = len(perms)
    mult = np.empty((q, q), dtype=np.int64)
    for i, p in enumerate(perms):
        for j, r in enumerate(perms):
            mult[i, j] = index[tuple(p[r[x]] for x in range(k))]
    return FiniteGroup(mult, f"S{k}", structure=("symmetric", k))


def dihedral(m: int) -> FiniteGroup:
    """Dihedral group of order 2m (m <= 8): rotations r^i and reflections r^i s."""
    if m > 8:
        raise OrderCapExceeded("dihedral groups only shipped up to order 16")
    if m < 1:
        raise TableInvalid("dihedral parameter must be positive")
    q = 2 * m

    def idx(r, s):
        return s * m + r

    mult = np.empty((q, q), dtype=np.int64)
    for s1 in range(2):
        for r1 in range(m):
            for s2 in range(2):
                for r2 in range(m):
                    # (r1,s1)*(r2,s2) = (r1 + (-1)^s1 r2, s1 xor s2)
                    r = (r1 + (r2 if s1 == 0 else -r2)) % m
                    mult[idx(r1, s1), idx(r2, s2)] = idx(r, s1 ^ s2)
    return FiniteGroup(mult, f"D{m}", structure=("dihedral", m))


def from_table_text(text: str, name: str = "table") -> FiniteGroup:
    """Parse the plain-text table format: line 1 is Q, then Q rows of products."""
    tokens = text.split()
    if not tokens:
        raise TableInvalid("empty table file")
    q = int(tokens[0])
    body = tokens[1:]
    if len(body) != q * q:
        raise TableInvalid(f"expected {q * q} entries, got {len(body)}")
    mult = np.array([int(t) for t in body], dtype=np.int64).reshape(q, q)
    mult = _reindex_identity(mult)
    return FiniteGroup(mult, name, structure=("table", name))


def load_table(path) -> FiniteGroup:
    path = Path(path)
    return from_table_text(path.read_text(), name=path.stem)


def _reindex_identity(mult: np.ndarray) -> np.ndarray:
    """Find the two-sided identity and permute it to index 0."""
    q = mult.shape[0]
    ar = np.arange(q)
    ident = None
    for e in range(q):
        if np.array_equal(mult[e], ar) and np.array_equal(mult[:, e], ar):
            ident = e
            break
    if ident is None:
        raise TableInvalid("no identity element")
    if ident == 0:
        return mult
    perm = np.arange(q)
    perm[0], perm[ident] = ident, 0  # swap labels 0 <-> ident
    out = np.empty_like(mult)
    for a in range(q):
        for b in range(q):
            out[perm[a], perm[b]] = perm[mult[a, b]]
    return out


def parse_group_spec(text: str) -> GroupSpec:
    """Parse compact spec strings: "c6", "c2xc3", "s3", "d4", "file:PATH"."""
    text = text.strip()
    if text.lower().startswith("file:"):
        return GroupSpec("table", (text[5:],))
    parts = [p.strip() for p in text.lower().split("x")]
    specs = []
    for p in parts:
        if len(p) < 2 or p[0] not in "csd" or not p[1:].isdigit():
            raise TableInvalid(f"cannot parse group spec {text!r}")
        kind = {"c": "cyclic", "s": "symmetric", "d": "dihedral"}[p[0]]
        specs.append(GroupSpec(kind, (int(p[1:]),)))
    if len(specs) == 1:
        return specs[0]
    return GroupSpec("product", tuple(specs))


def build_group(spec) -> FiniteGroup:
    """Build a validated group from a GroupSpec or a compact spec string."""
    if isinstance(spec, str):
        spec = parse_group_spec(spec)
    if spec.kind == "cyclic":
        return cyclic(spec.params[0])
    if spec.kind == "symmetric":
        return symmetric(spec.params[0])
    if spec.kind == "dihedral":
        return dihedral(spec.params[0])
    if spec.kind == "product":
        return product(*(build_group(s) for s in spec.params))
    if spec.kind == "table":
        return load_table(spec.params[0])
    raise TableInvalid(f"unknown spec kind {spec.kind!r}")


def minimal_generating_set(group: FiniteGroup) -> tuple[int, ...]:
    """Smallest generating set, ties broken by lexicographic element index."""
    if group.order == 1:
        return ()
    for size in range(1, group.order + 1):
        for combo in itertools.combinations(range(1, group.order), size):
            if generates(group, combo):
                return combo
    raise NTooSmall("group has no generating set")  # unreachable
