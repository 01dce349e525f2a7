"""Counting-free modal bisimulations between finite structures."""
from __future__ import annotations

from dataclasses import dataclass, field

from .formula import Fragment, Signature
from .semantics import Structure

__all__ = [
    "BisimRelation", "UnknownConstant", "Verification",
    "greatest_bisimulation", "are_bisimilar", "verify_bisimulation",
]


class UnknownConstant(KeyError):
    pass


@dataclass(frozen=True)
class BisimRelation:
    pairs: frozenset
    fragment: Fragment
    sig: Signature

    def __contains__(self, ab):
        return ab in self.pairs

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def labelled(self, A: Structure, B: Structure):
        return sorted([A.labels[a], B.labels[b]] for a, b in self.pairs)


@dataclass
class Verification:
    ok: bool
    pair: tuple | None = None
    condition: str | None = None
    detail: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def _directions(F: Fragment):
    return (False, True) if F.inverse else (False,)


def _check_consts(A, B, sig):
    for c in sig.consts:
        if c not in A.consts or c not in B.consts:
            raise UnknownConstant(f"constant {c!r} is not denoted on both sides")


def _atom_ok(A, B, a, b, sig, F):
    for p in sig.props:
        if ((A.prop_mask(p) >> a) & 1) != ((B.prop_mask(p) >> b) & 1):
            return False
    if F.nominals:
        for c in sig.consts:
            if (A.consts[c] == a) != (B.consts[c] == b):
                return False
    return True


def _nbr(S: Structure, rel, x, inv):
    table = (S._pred if inv else S._succ).get(rel)
    return 0 if table is None else table[x]


def _bits(m):
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def greatest_bisimulation(A: Structure, B: Structure, sig: Signature, F: Fragment) -> BisimRelation:
    """Largest ML-style bisimulation for the counting-free part of F over sig.

    Refinement works on rows ``Z[a]`` (bitmask over B) and removes pairs that
    violate forth or back until nothing changes.  Nominal and global side
    conditions are checked afterwards; if they fail no bisimulation of the
    requested kind exists and the empty relation is returned.
    """
    if F.nominals:
        _check_consts(A, B, sig)
    Z = [0] * len(A)
    for a in A.domain:
        for b in B.domain:
            if _atom_ok(A, B, a, b, sig, F):
                Z[a] |= 1 << b
    rels = sorted(sig.rels)
    dirs = _directions(F)
    changed = True
    while changed:
        changed = False
        for a in A.domain:
            row = Z[a]
            if not row:
                continue
            keep = row
            for b in _bits(row):
                if not _pair_ok(A, B, Z, a, b, rels, dirs):
                    keep &= ~(1 << b)
            if keep != row:
                Z[a] = keep
                changed = True
    pairs = frozenset((a, b) for a in A.domain for b in _bits(Z[a]))
    if F.nominals and any((A.consts[c], B.consts[c]) not in pairs for c in sig.consts):
        pairs = frozenset()
    if F.universal and pairs:
        left = {a for a, _ in pairs}
        right = {b for _, b in pairs}
        if len(left) != len(A) or len(right) != len(B):
            pairs = frozenset()
    return BisimRelation(pairs, F, sig)


def _pair_ok(A, B, Z, a, b, rels, dirs):
    return _first_failure(A, B, Z, a, b, rels, dirs) is None


def _first_failure(A, B, Z, a, b, rels, dirs):
    for r in rels:
        for inv in dirs:
            tag = r + ("-" if inv else "")
            na = _nbr(A, r, a, inv)
            nb = _nbr(B, r, b, inv)
            reach = 0
            for a2 in _bits(na):
                if not Z[a2] & nb:
                    return f"forth {tag}"
                reach |= Z[a2]
            if nb & ~reach:
                return f"back {tag}"
    return None


def are_bisimilar(A, a, B, b, sig, F) -> bool:
    return (a, b) in greatest_bisimulation(A, B, sig, F).pairs


def verify_bisimulation(rel: BisimRelation, A: Structure, B: Structure, check_pairs=None) -> Verification:
    """Check every selected condition literally; report the first violation.

    ``check_pairs`` restricts the local (atom/forth/back) checks to a subset,
    which is how truncated prefixes of infinite models are verified on their
    interior only.
    """
    F, sig = rel.fragment, rel.sig
    for a, b in rel.pairs:
        if not (0 <= a < len(A) and 0 <= b < len(B)):
            return Verification(False, (a, b), "range")
    Z = [0] * len(A)
    for a, b in rel.pairs:
        Z[a] |= 1 << b
    if F.nominals:
        for c in sorted(sig.consts):
            if c not in A.consts or c not in B.consts:
                return Verification(False, None, f"nominal {c} undenoted")
            if (A.consts[c], B.consts[c]) not in rel.pairs:
                return Verification(False, (A.consts[c], B.consts[c]), f"nominal {c}")
    if F.universal:
        left = {a for a, _ in rel.pairs}
        right = {b for _, b in rel.pairs}
        for a in A.domain:
            if a not in left:
                return Verification(False, (a, None), "global")
        for b in B.domain:
            if b not in right:
                return Verification(False, (None, b), "global")
    todo = rel.pairs if check_pairs is None else (set(check_pairs) & rel.pairs)
    rels = sorted(sig.rels)
    dirs = _directions(F)
    for a, b in sorted(todo):
        if not _atom_ok(A, B, a, b, sig, F):
            return Verification(False, (a, b), "atom")
        bad = _first_failure(A, B, Z, a, b, rels, dirs)
        if bad:
            return Verification(False, (a, b), bad)
    return Verification(True)
