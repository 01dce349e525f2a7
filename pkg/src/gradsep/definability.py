"""Flattening, counting-free definability and uniform separators.

The decisions reduce to validity checks in the source logic: a formula is
definable without counting iff it is equivalent to its flattening, and it has
a uniform counting-free separator iff it entails its flattening (with the
nominal-aware flattening when constants are around).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .formula import (
    AND, NOM, NOT, PROP, TOP, UDIA, Formula, Fragment, Signature,
    big_and, big_or, bottom, conj, conjuncts, dia, fragment_check, fresh_name,
    iff, neg, nom, signature_of, subformulas, top, udia, uses, rename,
)
from .sat import UnsupportedFragment, bounded_model_search, entails, is_valid, sat_check

__all__ = [
    "HasNominals", "ConstantOutsideScope", "UnsupportedFragment", "Answer", "ConstantPolicy",
    "flatten", "flatten_nominal", "expand_nominal_grades", "is_definable",
    "uniform_separator", "relative_definability_transform", "simplify",
]


class HasNominals(ValueError):
    pass


class ConstantOutsideScope(ValueError):
    pass


@dataclass
class Answer:
    """Verdict of a definability-style query.

    ``kind`` is one of Definable, NotDefinable, Exists, NotExists,
    UnknownFinVal.  ``witness`` is the (simplified) formula for positive
    answers and ``flattening`` the raw flattening it was derived from.
    """
    kind: str
    witness: Formula | None = None
    flattening: Formula | None = None
    evidence: dict = field(default_factory=dict)

    def __bool__(self):
        return self.kind in ("Definable", "Exists")

    @property
    def exact(self):
        return self.kind != "UnknownFinVal"


def _flat(f: Formula, cs: tuple, counting_free: bool) -> Formula:
    memo = {}
    for s in subformulas(f):
        k = s.kind
        if k in (TOP, PROP, NOM):
            out = s
        elif k == NOT:
            out = neg(memo[s.args[0]])
        elif k == AND:
            out = conj(memo[s.args[0]], memo[s.args[1]])
        elif k == UDIA:
            out = udia(memo[s.args[0]])
        else:
            body = memo[s.args[0]]
            if s.k == 1 or not cs:
                out = dia(s.rel, body, 1, s.inv)
            else:
                plain = dia(s.rel, conj(body, big_and(neg(nom(c)) for c in cs)), 1, s.inv)
                if counting_free:
                    named = _count_named(s.rel, s.inv, s.k, body, cs)
                else:
                    named = dia(s.rel, conj(body, big_or(nom(c) for c in cs)), s.k, s.inv)
                out = plain if named is None else big_or([plain, named])
        memo[s] = out
    return memo[f]


def _count_named(rel, inv, k, body, cs):
    """At least k distinct named successors satisfy body (no grades needed)."""
    if k > len(cs):
        return None
    return big_or(big_and(dia(rel, conj(body, nom(c)), 1, inv) for c in D) for D in combinations(cs, k))


def flatten(phi: Formula) -> Formula:
    """Replace every graded diamond by a plain one."""
    if uses(phi).nominals:
        raise HasNominals("flatten needs a nominal-free formula; use flatten_nominal")
    return _flat(phi, (), False)


def flatten_nominal(phi: Formula, consts, counting_free: bool = False) -> Formula:
    """Nominal-aware flattening over the constant set ``consts``.

    A grade k >= 2 becomes ``dia (body & no-constant) | dia>=k (body & some-constant)``;
    with ``counting_free`` the second disjunct is spelled out as a disjunction
    over k-subsets of the constants instead.  Grade 1 stays a plain diamond,
    which is equivalent to splitting it.
    """
    cs = tuple(sorted(set(consts)))
    outside = signature_of(phi).consts - set(cs)
    if outside:
        raise ConstantOutsideScope(f"constants {sorted(outside)} not in the given set")
    return _flat(phi, cs, counting_free)


def expand_nominal_grades(phi: Formula, consts) -> Formula:
    return flatten_nominal(phi, consts, counting_free=True)


def simplify(f: Formula, F: Fragment | None = None) -> Formula:
    """Drop top-level conjuncts implied by the rest; collapse valid/unsat to true/false.

    Only semantic steps the SAT backend can decide; inverse formulas come back as is.
    """
    if uses(f).inverse:
        return f
    if not sat_check(f):
        return bottom()
    if is_valid(f):
        return top()
    parts = list(dict.fromkeys(conjuncts(f)))
    # try the bulkiest conjuncts first so short ones are what remains
    for c in sorted(parts, key=lambda c: -len(subformulas(c))):
        if len(parts) > 1:
            rest = big_and(p for p in parts if p is not c)
            if entails(rest, c):
                parts.remove(c)
    return big_and(parts)


def _source_ok(phi):
    if uses(phi).inverse:
        raise UnsupportedFragment("no validity backend for inverse source logics")


def _fit_target(w: Formula, target: Fragment, what="witness") -> Formula:
    if not fragment_check(w, target):
        raise UnsupportedFragment(f"{what} {w} is not expressible in {target.name}")
    return w


def is_definable(phi: Formula, target: Fragment) -> Answer:
    """Decide whether phi is equivalent to a formula of the counting-free target."""
    _source_ok(phi)
    if target.graded:
        if fragment_check(phi, target):
            return Answer("Definable", phi, phi)
        target = target.counting_free()
    consts = sorted(signature_of(phi).consts)
    if consts and not target.nominals:
        raise UnsupportedFragment("formula has constants but the target has no nominals")
    if consts:
        fl = flatten_nominal(phi, consts)
        out = expand_nominal_grades(phi, consts)
    else:
        fl = out = flatten(phi)
    if not is_valid(iff(phi, fl)):
        return Answer("NotDefinable", flattening=fl)
    # cross pairs (say a universal source and a target without it) only work
    # when the flattening, or its simplification, lands inside the target
    w = simplify(out)
    if not fragment_check(w, target):
        w = _fit_target(out, target)
    return Answer("Definable", w, fl)


@dataclass(frozen=True)
class ConstantPolicy:
    """Which constants the separator signature offers.

    ``none``: no constants; ``finite``: exactly ``consts``; ``infinite``:
    infinitely many, with ``consts`` the finite part that matters.
    """
    kind: str = "none"
    consts: frozenset = frozenset()

    @classmethod
    def parse(cls, text: str) -> "ConstantPolicy":
        text = text.strip()
        if text in ("", "none"):
            return cls("none")
        if text.startswith("infinite"):
            _, _, rest = text.partition(":")
            return cls("infinite", frozenset(c.strip() for c in rest.split(",") if c.strip()))
        return cls("finite", frozenset(c.strip() for c in text.split(",") if c.strip()))


def uniform_separator(phi: Formula, policy, target: Fragment, search_size: int = 3) -> Answer:
    """Strongest counting-free consequence of phi, if it exists."""
    if isinstance(policy, str):
        policy = ConstantPolicy.parse(policy)
    consts = signature_of(phi).consts
    if policy.kind == "none":
        if consts:
            raise ConstantOutsideScope(f"formula uses constants {sorted(consts)} but the policy offers none")
        cs = ()
    else:
        if not consts <= policy.consts:
            raise ConstantOutsideScope(f"constants {sorted(consts - policy.consts)} not covered by the policy")
        cs = tuple(sorted(policy.consts))
        if cs and not target.nominals:
            raise UnsupportedFragment("constants in the signature need a target with nominals")
    fl = flatten_nominal(phi, cs) if cs else flatten(phi)
    out = expand_nominal_grades(phi, cs) if cs else fl
    if uses(phi).inverse:
        if policy.kind != "infinite":
            raise UnsupportedFragment("no validity backend for inverse source logics")
        return _inverse_infinite(phi, fl, out, target, search_size)
    if not entails(phi, fl):
        return Answer("NotExists", flattening=fl)
    if policy.kind == "infinite" and not entails(fl, phi):
        # finite and general entailment agree here (finite model property)
        return Answer("NotExists", flattening=fl, evidence={"reason": "flattening does not entail phi"})
    w = simplify(out)
    if not fragment_check(w, target):
        w = _fit_target(out, target)
    return Answer("Exists", w, fl)


def _inverse_infinite(phi, fl, out, target, n):
    cm = bounded_model_search(conj(phi, neg(fl)), n)
    if cm:
        return Answer("NotExists", flattening=fl, evidence={"countermodel": cm, "side": "phi & ~fl"})
    cm = bounded_model_search(conj(fl, neg(phi)), n)
    if cm:
        return Answer("NotExists", flattening=fl, evidence={"countermodel": cm, "side": "fl & ~phi"})
    return Answer("UnknownFinVal", _fit_target(out, target), fl, evidence={"searched_up_to": n})


def relative_definability_transform(rho: Signature, phi: Formula, psi: Formula):
    """Pair whose Craig separability matches explicit rho-definability of psi modulo phi."""
    sig = signature_of(conj(phi, psi))
    taken = set(sig.names()) | set(rho.names())
    maps = {}
    for kind in ("props", "rels", "consts"):
        m = {}
        for name in sorted(getattr(sig, kind) - getattr(rho, kind)):
            new = fresh_name(name + "_r", taken)
            taken.add(new)
            m[name] = new
        maps[kind] = m
    phi_r = rename(phi, maps["props"], maps["rels"], maps["consts"])
    psi_r = rename(psi, maps["props"], maps["rels"], maps["consts"])
    return conj(phi, psi), conj(phi_r, neg(psi_r))
