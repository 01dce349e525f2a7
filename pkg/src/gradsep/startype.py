"""Star-type mosaics for separation when converse relations are around.

With converse modalities a type no longer says how many of an element's
neighbours sit in the parent bisimulation class, so each type is paired with
two successor type sets: neighbours inside the parent class (``sp``) and all
the others (``sc``).  A star mosaic is a pair of sets of star-types, and two
formulas are not separable iff some family of star mosaics has a root with
phi1 on the left and phi2 on the right, and every member has a syntactic
witness inside the family.

The decision procedure is demand driven.  It starts from root candidates,
builds child mosaics from the child entries of star-types it has already
generated, and keeps a greatest fixpoint over the graph built so far.  A
NotSeparable answer carries the family together with every witness relation,
and that certificate is re-checked condition by condition before it is
returned, so it is sound whatever the budget.  Separable is exact only when
type-level pruning alone rules out every root pair; otherwise it reports that
no family was found within the budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, islice, product

from .formula import ClosureIndex, Formula, Fragment, fragment_check, modal_depth, signature_of, uses
from .hintikka import TypeSpace
from .mosaic import BudgetExceeded, SepResult, default_budget, separation_signature
from .sat import UnsupportedFragment
from .semantics import Structure, realized_type

__all__ = [
    "MANY", "SuccessorTypeSet", "StarType", "StarMosaic", "SyntacticWitnessCert",
    "InverseProblem", "s_profile", "combined_profile", "coherence_violation", "is_coherent",
    "leads_to", "realised_startype", "mosaic_violation", "enumerate_startypes",
    "syntactic_witness_check", "find_syntactic_witness", "eliminate_startype",
    "check_startype_certificate", "decide_separation_inverse",
    "decide_separation_inverse_bounded",
]

MANY = math.inf


def _sat(n, kb):
    return MANY if n > kb else n


def _inv(S):
    return (S[0], not S[1])


# ---------------------------------------------------------------------------
# successor type sets, profiles, star-types

@dataclass(frozen=True)
class SuccessorTypeSet:
    """Counts of neighbours per (direction, type); zero entries are left out.

    A direction ``S`` is ``(rel, inv)``.  Counts run over 1..k and MANY
    (more than k), where k is the largest grade of the problem.
    """
    entries: tuple = ()

    @classmethod
    def of(cls, items, kb) -> "SuccessorTypeSet":
        acc = {}
        for S, t, n in items:
            acc[(S, t)] = acc.get((S, t), 0) + n
        return cls(tuple(sorted((S, t, _sat(n, kb)) for (S, t), n in acc.items() if n)))

    def count(self, S, t):
        for S2, t2, n in self.entries:
            if S2 == S and t2 == t:
                return n
        return 0

    def positive(self, S, t) -> bool:
        return self.count(S, t) > 0

    def types(self):
        return {t for _, t, _ in self.entries}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __bool__(self):
        return bool(self.entries)


EMPTY = SuccessorTypeSet()


@dataclass(frozen=True)
class StarType:
    t: int
    sp: SuccessorTypeSet = EMPTY
    sc: SuccessorTypeSet = EMPTY


@dataclass(frozen=True)
class StarMosaic:
    m1: frozenset
    m2: frozenset

    def side(self, i):
        return self.m1 if i == 1 else self.m2

    @property
    def is_root(self) -> bool:
        return all(not st.sp for st in self.m1 | self.m2)

    def star_types(self):
        return [(1, st) for st in _sorted(self.m1)] + [(2, st) for st in _sorted(self.m2)]


def _sorted(sts):
    return sorted(sts, key=lambda st: (st.t, st.sp.entries, st.sc.entries))


def s_profile(TS: TypeSpace, s: SuccessorTypeSet, kb: int) -> dict:
    """(S, body) -> saturated count of neighbours whose type holds the body."""
    out = {}
    for S, d in TS.keys.items():
        for body in d["bodies"]:
            n = 0
            for S2, t, c in s:
                if S2 == S and TS.holds(t, body):
                    n += c
            out[(S, body)] = _sat(n, kb)
    return out


def combined_profile(TS: TypeSpace, sp: SuccessorTypeSet, sc: SuccessorTypeSet, kb: int) -> dict:
    a, b = s_profile(TS, sp, kb), s_profile(TS, sc, kb)
    return {k: _sat(a[k] + b[k], kb) for k in a}


def coherence_violation(TS: TypeSpace, st: StarType, kb: int):
    """None if ``st`` is coherent, else a short description of the first failure."""
    U = TS.udia_part(st.t)
    for s in (st.sp, st.sc):
        for S, t, _ in s:
            if TS.udia_part(t) != U:
                return f"neighbour type {t} along {S} is not universally equivalent"
    prof = combined_profile(TS, st.sp, st.sc, kb)
    for S, d in TS.keys.items():
        for body, grades in zip(d["bodies"], d["grades"]):
            n = prof[(S, body)]
            for k, i in grades:
                if bool((st.t >> i) & 1) != (n >= k):
                    return f"grade {k} along {S} for body {body}: type says {bool((st.t >> i) & 1)}, count {n}"
    return None


def is_coherent(TS: TypeSpace, st: StarType, kb: int) -> bool:
    return coherence_violation(TS, st, kb) is None


def leads_to(st: StarType, st2: StarType, S) -> bool:
    """st ~>_S st2: st has a child of st2's type along S and st2 a parent of st's type."""
    return st.sc.positive(S, st2.t) and st2.sp.positive(_inv(S), st.t)


def realised_startype(A: Structure, a: int, D, C: ClosureIndex, kb: int, types=None) -> StarType:
    """Star-type of element ``a`` relative to the set ``D`` of parent-class elements."""
    if types is None:
        memo = {}
        types = [realized_type(A, x, C, memo) for x in A.domain]
    D = set(D)
    sp, sc = [], []
    for rel in sorted(A.rels):
        for inv in (False, True):
            for b in A.successors(rel, a, inv):
                (sp if b in D else sc).append(((rel, inv), types[b], 1))
    return StarType(types[a], SuccessorTypeSet.of(sp, kb), SuccessorTypeSet.of(sc, kb))


# ---------------------------------------------------------------------------
# problem context

class InverseProblem:
    """Closure, shared signature and the caps for one separation query."""

    def __init__(self, phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                 budget: int | None = None, support_cap: int = 3, width: int = 6):
        for f in (phi1, phi2):
            if uses(f).nominals:
                raise UnsupportedFragment("the star-type procedure handles nominal-free inputs only")
        if target.graded or target.nominals:
            raise UnsupportedFragment(f"target {target.name} must be one of ML, ML^i, ML^u, ML^{{i,u}}")
        self.phi1, self.phi2 = phi1, phi2
        self.target = target
        self.mode = mode
        self.sigma = signature_of(phi1) | signature_of(phi2)
        self.rho = separation_signature(phi1, phi2, mode, target)
        self.C = ClosureIndex(phi1, phi2)
        self.TS = TypeSpace(self.C)
        self.kb = max(1, self.TS.kmax)
        self.budget = default_budget() if budget is None else budget
        self.support_cap = support_cap
        self.width = width
        self.allow_empty = not target.universal
        self.md = max(modal_depth(phi1), modal_depth(phi2))
        self.dirs = [(r, inv) for r in sorted(self.sigma.rels) for inv in (False, True)]
        TS = self.TS
        self.atom_mask = sum(1 << TS.prop_bits[a] for a in self.rho.props if a in TS.prop_bits)
        # closure members a target(rho) formula can express: bisimilar points agree on them
        cf = target.counting_free()
        self.key_mask = sum(1 << i for i, b in enumerate(self.C.base)
                            if fragment_check(b, cf) and signature_of(b) <= self.rho)

    def shared(self, S) -> bool:
        return S[0] in self.rho.rels and (not S[1] or self.target.inverse)

    def key(self, t):
        return t & self.key_mask

    def atoms(self, t):
        return t & self.atom_mask


def mosaic_violation(P: InverseProblem, M: StarMosaic):
    TS = P.TS
    sts = M.m1 | M.m2
    if len({P.atoms(st.t) for st in sts}) > 1:
        return "shared propositions disagree inside the mosaic"
    for st in sts:
        v = coherence_violation(TS, st, P.kb)
        if v:
            return "incoherent star-type: " + v
    return None


def enumerate_startypes(P: InverseProblem, types=None, support: int = 1, stats: dict | None = None):
    """Coherent star-types whose parent and child sets together have at most
    ``support`` non-zero entries over ``types``.

    Meant for tiny closures; ``stats["capped"]`` records that the support cap
    cut something off (always the case unless ``types`` is a single type
    without diamonds).
    """
    TS, kb = P.TS, P.kb
    types = list(TS.types if types is None else types)
    if stats is not None:
        stats["capped"] = True
    slots = [(S, s) for S in P.dirs for s in types]
    counts = list(range(1, kb + 1)) + [MANY]
    for t in types:
        for n in range(support + 1):
            for chosen in combinations(slots, n):
                for where in product((0, 1), repeat=n):
                    for cs in product(counts, repeat=n):
                        sp = SuccessorTypeSet.of([(S, s, c) for (S, s), w, c in zip(chosen, where, cs) if w == 0], kb)
                        sc = SuccessorTypeSet.of([(S, s, c) for (S, s), w, c in zip(chosen, where, cs) if w == 1], kb)
                        st = StarType(t, sp, sc)
                        if is_coherent(TS, st, kb):
                            yield st


# ---------------------------------------------------------------------------
# syntactic witnesses

@dataclass
class SyntacticWitnessCert:
    """Candidate mosaics plus the witnessing relation, one per direction.

    ``relation[S]`` is a set of ``(side, st, index into candidates, st')``;
    ``g`` maps such a quadruple (shared directions only) to the function of
    the counting condition, given as ``{candidate index: star-type}``.
    """
    mosaic: StarMosaic
    candidates: list
    relation: dict
    g: dict = field(default_factory=dict)


def _successors(P, M, cands, rel, S):
    """Indices of S-successors, or a violation string for the bisimulation condition."""
    succ = []
    for j, N in enumerate(cands):
        allowed = {"full", "none"}
        any_pairs = False
        for i in (1, 2):
            pairs = {(st, st2) for ii, st, jj, st2 in rel if ii == i and jj == j}
            any_pairs |= bool(pairs)
            full = (all(any(p[0] == st for p in pairs) for st in M.side(i))
                    and all(any(p[1] == st2 for p in pairs) for st2 in N.side(i)))
            if full and pairs:
                allowed &= {"full"}
            elif not full and not pairs:
                allowed &= {"none"}
            elif not full:
                return f"(bisim) candidate {j} is only partly linked along {S} on side {i}"
        if not allowed:
            return f"(bisim) candidate {j} is linked along {S} on one side only"
        if any_pairs:
            succ.append(j)
    return succ


def _find_g(st, S, fixed_j, fixed_st, succ, cands, side):
    """A choice of one star-type per successor mosaic respecting st's counts."""
    cap = {}
    for S2, t, n in st.sc:
        if S2 == S:
            cap[t] = n
    if cap.get(fixed_st.t, 0) < 1:
        return None
    cap[fixed_st.t] -= 1
    rest = [j for j in succ if j != fixed_j]
    choice = {fixed_j: fixed_st}

    def go(k):
        if k == len(rest):
            return True
        j = rest[k]
        for st2 in _sorted(cands[j].side(side)):
            if cap.get(st2.t, 0) >= 1:
                cap[st2.t] -= 1
                choice[j] = st2
                if go(k + 1):
                    return True
                cap[st2.t] += 1
                del choice[j]
        return False

    return dict(choice) if go(0) else None


def _g_ok(g, st, S, fixed_j, fixed_st, succ, cands, side):
    if set(g) != set(succ) or g.get(fixed_j) != fixed_st:
        return False
    used = {}
    for j, st2 in g.items():
        if st2 not in cands[j].side(side):
            return False
        used[st2.t] = used.get(st2.t, 0) + 1
    return all(n <= st.sc.count(S, t) for t, n in used.items())


def syntactic_witness_check(P: InverseProblem, M: StarMosaic, cert: SyntacticWitnessCert):
    """Evaluate the witness conditions literally.  Returns (ok, violation)."""
    cands = cert.candidates
    for S in P.dirs:
        rel = cert.relation.get(S, set())
        for i, st, j, st2 in rel:
            if st not in M.side(i) or not (0 <= j < len(cands)) or st2 not in cands[j].side(i):
                return False, f"relation along {S} names a star-type outside the mosaics"
            if not leads_to(st, st2, S):
                return False, f"(coherence) along {S}: {st.t} does not lead to {st2.t}"
        if not P.shared(S):
            continue
        succ = _successors(P, M, cands, rel, S)
        if isinstance(succ, str):
            return False, succ
        for q in rel:
            i, st, j, st2 = q
            g = cert.g.get((S,) + q)
            if g is None:
                g = _find_g(st, S, j, st2, succ, cands, i)
                if g is None:
                    return False, f"(wit3) no counting function for an edge along {S}"
            elif not _g_ok(g, st, S, j, st2, succ, cands, i):
                return False, f"(wit3) the recorded counting function fails along {S}"
    for i in (1, 2):
        for st in M.side(i):
            for S, t2, _ in st.sc:
                rel = cert.relation.get(S, set())
                if not any(q[0] == i and q[1] == st and q[3].t == t2 for q in rel):
                    return False, f"(wit1) child entry {t2} along {S} has no partner"
    for j, N in enumerate(cands):
        for i in (1, 2):
            for st2 in N.side(i):
                for Q, t, _ in st2.sp:
                    rel = cert.relation.get(_inv(Q), set())
                    if not any(q[0] == i and q[2] == j and q[3] == st2 and q[1].t == t for q in rel):
                        return False, f"(wit2) parent entry {t} along {Q} of candidate {j} has no partner"
    return True, None


def find_syntactic_witness(P: InverseProblem, M: StarMosaic, family, max_size: int = 3):
    """Backtracking search for a witness of M among ``family``.

    Tries candidate sets by increasing size (up to ``max_size``); for a fixed
    candidate set the largest relation that passes the counting condition is
    the best one, so only the set is searched.  Returns a certificate or None.
    """
    pool = []
    for N in family:
        ok = True
        for i in (1, 2):
            for st2 in N.side(i):
                for Q, t, _ in st2.sp:
                    if not any(st.t == t and leads_to(st, st2, _inv(Q)) for st in M.side(i)):
                        ok = False
        if ok and (N.m1 or N.m2):
            pool.append(N)
    for size in range(0, min(max_size, len(pool)) + 1):
        for cands in combinations(pool, size):
            cert = _relation_for(P, M, list(cands))
            if cert is not None and syntactic_witness_check(P, M, cert)[0]:
                return cert
    return None


def _relation_for(P, M, cands):
    relation, gs = {}, {}
    for S in P.dirs:
        rel = {(i, st, j, st2) for j, N in enumerate(cands) for i in (1, 2)
               for st in M.side(i) for st2 in N.side(i) if leads_to(st, st2, S)}
        if P.shared(S):
            # candidates that cannot be full successors lose their edges
            keep = set()
            for j, N in enumerate(cands):
                sub = {q for q in rel if q[2] == j}
                full = all(any(q[0] == i and q[1] == st for q in sub) for i in (1, 2) for st in M.side(i)) and \
                    all(any(q[0] == i and q[3] == st2 for q in sub) for i in (1, 2) for st2 in N.side(i))
                if full:
                    keep |= sub
            rel = keep
            succ = sorted({q[2] for q in rel})
            good = set()
            for q in rel:
                g = _find_g(q[1], S, q[2], q[3], succ, cands, q[0])
                if g is not None:
                    good.add(q)
                    gs[(S,) + q] = g
            rel = good
        relation[S] = rel
    return SyntacticWitnessCert(M, cands, relation, gs)


def _partner_ok(P, M, family):
    """Universal-diamond condition: every true E chi has a root partner."""
    TS = P.TS
    for i in (1, 2):
        for st in M.side(i):
            for u, chi in TS.udia_of:
                if not (st.t >> u) & 1:
                    continue
                if not any(N.is_root and any(TS.holds(s.t, chi) and TS.udia_part(s.t) == TS.udia_part(st.t)
                                             for s in N.side(i)) for N in family):
                    return False
    return True


def eliminate_startype(P: InverseProblem, S0, max_size: int = 3):
    """Remove bad star mosaics from the finite set S0 until nothing changes."""
    S = [M for M in S0 if mosaic_violation(P, M) is None and (P.allow_empty or (M.m1 and M.m2))]
    while True:
        bad = [M for M in S if not _partner_ok(P, M, S) or find_syntactic_witness(P, M, S, max_size) is None]
        if not bad:
            return S
        S = [M for M in S if M not in bad]


def check_startype_certificate(P: InverseProblem, cert: dict):
    """Re-check a family returned by the search.  Returns (ok, violation)."""
    TS = P.TS
    mos = cert["mosaics"]
    index = {M: k for k, M in enumerate(mos)}
    levels = cert.get("levels")
    for k, M in enumerate(mos):
        v = mosaic_violation(P, M)
        if v:
            return False, f"mosaic {k}: {v}"
        if not P.allow_empty and (not M.m1 or not M.m2):
            return False, f"(m1) mosaic {k} has an empty side"
        if not M.m1 and not M.m2:
            return False, f"mosaic {k} is empty"
    root = mos[cert["root"]]
    if not root.is_root:
        return False, "(m2) the start mosaic has parent entries"
    if levels is not None and levels[cert["root"]] != 0:
        return False, "the start mosaic is not on level 0"
    if not any(TS.holds(st.t, P.phi1) for st in root.m1) or not any(TS.holds(st.t, P.phi2) for st in root.m2):
        return False, "(m2) the start mosaic misses phi1 on the left or phi2 on the right"
    for k, M in enumerate(mos):
        if levels is not None and levels[k] >= P.md:
            continue
        w = cert["witnesses"].get(k)
        if w is None or w.mosaic != M:
            return False, f"(m3) mosaic {k} has no witness"
        for N in w.candidates:
            if N not in index:
                return False, f"(m3) witness of mosaic {k} leaves the family"
            if levels is not None and levels[index[N]] > levels[k] + 1:
                return False, f"witness of mosaic {k} reaches below the next level"
        ok, why = syntactic_witness_check(P, M, w)
        if not ok:
            return False, f"(m3) mosaic {k}: {why}"
    for k, M in enumerate(mos):
        if not _partner_ok(P, M, mos):
            return False, f"(m4) mosaic {k} lacks a root partner for a universal diamond"
    return True, None


# ---------------------------------------------------------------------------
# demand-driven search

class _Group:
    """One OR-choice: a list of materialised options and a lazy source of more."""
    __slots__ = ("S", "gen", "opts", "done")

    def __init__(self, S, gen):
        self.S = S
        self.gen = gen
        self.opts = []  # (child mosaic, edges)
        self.done = False


class _Node:
    __slots__ = ("M", "groups", "valid")

    def __init__(self, M, valid):
        self.M = M
        self.groups = None
        self.valid = valid


class _Search:
    def __init__(self, P: InverseProblem, T1, T2, levels=None):
        self.P = P
        self.TS = P.TS
        self.T = {1: sorted(T1, key=self._pref), 2: sorted(T2, key=self._pref)}
        self.levels = levels
        self.nodes = {}
        self.spent = 0
        self.capped = False
        self._ngroups = {}
        self._dsol = {}
        self._zero = {}
        self.roots = []
        TS = self.TS
        U = {i: (TS.udia_part(self.T[i][0]) if self.T[i] else 0) for i in (1, 2)}
        self.partners = []
        for i in (1, 2):
            for u, chi in TS.udia_of:
                if (U[i] >> u) & 1:
                    self.partners.append((i, chi, _Group(None, self._partner_roots(i, chi))))
        self.start = _Group(None, self._start_roots())

    # -- type helpers
    def _pref(self, t):
        return (bin(t & self._dia_bits()).count("1"), t)

    def _dia_bits(self):
        m = getattr(self, "_dm", None)
        if m is None:
            m = self._dm = sum(d["dia_mask"] for d in self.TS.keys.values())
        return m

    def _prof(self, s, S):
        return self.TS.profile(s, S) if S in self.TS.keys else 0

    def _zeros(self, t, S):
        if S not in self.TS.keys:
            return 0
        k = (t, S)
        z = self._zero.get(k)
        if z is None:
            _, up = self.TS.bounds(t, S)
            z = self._zero[k] = sum(1 << j for j, u in enumerate(up) if u == 0)
        return z

    def _accepts(self, t, S, s):
        return not (self._zeros(t, S) & self._prof(s, S))

    def _neighbour_groups(self, side, t, S):
        k = (side, t, S)
        got = self._ngroups.get(k)
        if got is None:
            shared = self.P.shared(S)
            out = {}
            for s in self.T[side]:
                if self._accepts(t, S, s) and self._accepts(s, _inv(S), t):
                    gid = (self._prof(s, S), self.P.key(s) if shared else None)
                    out.setdefault(gid, []).append(s)
            got = self._ngroups[k] = sorted(out.items(), key=lambda kv: (kv[1][0], kv[0][0]))
        return got

    # -- successor set generation
    def _dir_solutions(self, side, t, S, sp, cover):
        """Group counts along S completing ``sp`` to t's requirements.

        Only groups that help a lower bound (or a required key) are used, and
        at most ``support_cap`` of them, so the sets are minimal-ish.
        """
        P, TS, kb = self.P, self.TS, self.P.kb
        groups = self._neighbour_groups(side, t, S)
        memo_key = (side, t, S, tuple((s, n) for S2, s, n in sp if S2 == S), cover)
        got = self._dsol.get(memo_key)
        if got is not None:
            return got
        if S in TS.keys:
            lo, up = TS.bounds(t, S)
            bodies = TS.keys[S]["bodies"]
            base = [0] * len(bodies)
            for S2, s, n in sp:
                if S2 == S:
                    p = self._prof(s, S)
                    for j in range(len(bodies)):
                        if (p >> j) & 1:
                            base[j] = min(kb + 1, base[j] + (kb + 1 if n == MANY else n))
        else:
            lo, up, base = [], [], []
        nb = len(base)
        if any(up[j] is not None and base[j] > up[j] for j in range(nb)):
            return []
        needy = sum(1 << j for j in range(nb) if base[j] < lo[j])
        if cover is not None:
            groups = [g for g in groups if g[0][1] in cover]
        useful = [g for g in groups if (g[0][0] & needy) or (cover and g[0][1] in cover)]
        sols = []
        counts = list(range(1, kb + 2))

        def ok_upper(sums):
            return all(up[j] is None or sums[j] <= up[j] for j in range(nb))

        def go(k, chosen, sums):
            if k == len(useful):
                if all(sums[j] >= lo[j] for j in range(nb)) and \
                        (cover is None or {g[0][1] for g, _ in chosen} == set(cover)):
                    sols.append(tuple(chosen))
                return
            go(k + 1, chosen, sums)
            if len(chosen) >= P.support_cap:
                if k < len(useful):
                    self.capped = True
                return
            g = useful[k]
            for n in counts:
                new = [min(kb + 1, sums[j] + n) if (g[0][0] >> j) & 1 else sums[j] for j in range(nb)]
                if not ok_upper(new):
                    break
                chosen.append((g, n))
                go(k + 1, chosen, new)
                chosen.pop()

        go(0, [], list(base))
        sols.sort(key=lambda c: (len(c), sum(n for _, n in c)))
        self._dsol[memo_key] = sols
        return sols

    def _sc_options(self, side, t, sp, cover):
        """Coherent star-types (t, sp, sc); ``cover`` fixes the child keys per shared direction."""
        P, kb = self.P, self.P.kb
        per_dir = []
        for S in P.dirs:
            cv = cover.get(S, frozenset()) if (cover is not None and P.shared(S)) else None
            sols = self._dir_solutions(side, t, S, sp, cv)
            if not sols:
                return
            if len(sols) > P.width:
                self.capped = True
                sols = sols[:P.width]
            per_dir.append((S, sols))
        combos = sorted(product(*[range(len(s)) for _, s in per_dir]), key=lambda ix: (sum(ix), ix))
        seen = set()
        for ix in combos:
            picks = [(S, sols[k]) for (S, sols), k in zip(per_dir, ix)]
            slots = [(S, g, n) for S, sol in picks for g, n in sol]
            alts = [range(min(2, len(g[1]))) for _, g, _ in slots]
            for choice in sorted(product(*alts), key=lambda c: (sum(c), c)):
                items = [(S, g[1][c], n) for (S, g, n), c in zip(slots, choice)]
                sc = SuccessorTypeSet.of(items, kb)
                st = StarType(t, sp, sc)
                if st in seen:
                    continue
                seen.add(st)
                if is_coherent(self.TS, st, kb):
                    yield st

    def _cover(self, st):
        P = self.P
        return {S: frozenset(P.key(t) for S2, t, _ in st.sc if S2 == S) for S in P.dirs if P.shared(S)}

    def _coordinated(self, sources):
        """Yield tuples of star-types, one per source, with equal child keys.

        A source is a function cover -> iterator of star-types.  Covers are
        tried in order: the union of every source's cheapest child keys first,
        then the keys of each cheap option on its own.
        """
        if not sources:
            return
        firsts = [list(islice(sp(None), self.P.width)) for sp in sources]
        if not all(firsts):
            return
        covers = []

        def add(K):
            if K not in covers:
                covers.append(K)

        union = {}
        for opts in firsts:
            for S, ks in self._cover(opts[0]).items():
                union[S] = union.get(S, frozenset()) | ks
        add(union)
        for k in range(self.P.width):
            for opts in firsts:
                if k < len(opts):
                    add(self._cover(opts[k]))
        n = 0
        for K in covers:
            out = []
            for sp in sources:
                got = next(iter(sp(K)), None)
                if got is None:
                    break
                out.append(got)
            else:
                yield tuple(out)
                n += 1
                if n >= self.P.width:
                    self.capped = True
                    return

    # -- nodes
    def _node(self, M):
        nd = self.nodes.get(M)
        if nd is None:
            nd = self.nodes[M] = _Node(M, self._valid(M))
            if nd.valid and M.is_root:
                self.roots.append(nd)
                for i, chi, grp in self.partners:
                    if any(self.TS.holds(st.t, chi) for st in M.side(i)):
                        grp.opts.append((M, None))
        return nd

    def _valid(self, M):
        P = self.P
        if not M.m1 and not M.m2:
            return False
        if not P.allow_empty and (not M.m1 or not M.m2):
            return False
        covers = {tuple(sorted(self._cover(st).items())) for st in M.m1 | M.m2}
        return len(covers) <= 1 and mosaic_violation(P, M) is None

    def _expand(self, nd):
        P = self.P
        nd.groups = []
        if not nd.valid:
            return
        demands = {}
        for i, st in nd.M.star_types():
            for S, t2, _ in st.sc:
                demands.setdefault((S, P.key(t2)), []).append((i, st, t2))
        for (S, kappa), ds in sorted(demands.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            nd.groups.append(_Group(S, self._children(nd.M, S, kappa, ds)))

    def _children(self, M, S, kappa, ds):
        P = self.P
        sources, keys = [], []
        by = {}
        for i, st, t2 in ds:
            by.setdefault((i, t2, st.t), []).append(st)
        for (i, t2, tp), parents in sorted(by.items()):
            keys.append((i, t2, tp, parents))
            sources.append(self._child_source(i, t2, S, tp))
        sides = {i for i, _, _, _ in keys}
        fillers = []
        if not P.shared(S) and not P.allow_empty:
            for j in (1, 2):
                if j not in sides:
                    fillers.append(j)
                    sources.append(self._filler_source(j, kappa))
        for combo in self._coordinated(sources):
            m = {1: set(), 2: set()}
            edges = []
            for (i, t2, tp, parents), st2 in zip(keys, combo):
                m[i].add(st2)
                edges.extend((i, st, st2) for st in parents)
            for j, st2 in zip(fillers, combo[len(keys):]):
                m[j].add(st2)
            yield StarMosaic(frozenset(m[1]), frozenset(m[2])), edges

    def _child_source(self, side, t2, S, tp):
        kb = self.P.kb

        def source(cover):
            for m in list(range(1, kb + 1)) + [MANY]:
                sp = SuccessorTypeSet.of([(_inv(S), tp, m)], kb)
                yield from self._sc_options(side, t2, sp, cover)
        return source

    def _filler_source(self, side, kappa):
        def source(cover):
            for t in self.T[side]:
                if self.P.key(t) == kappa:
                    yield from self._sc_options(side, t, EMPTY, cover)
        return source

    def _root_pairs(self, left, right):
        P = self.P
        for t1 in left:
            for t2 in right:
                if t2 is None or P.key(t1) == P.key(t2):
                    yield t1, t2

    def _roots_from(self, pairs):
        for t1, t2 in pairs:
            sources = [lambda cv, t=t1: self._sc_options(1, t, EMPTY, cv)]
            if t2 is not None:
                sources.append(lambda cv, t=t2: self._sc_options(2, t, EMPTY, cv))
            for combo in self._coordinated(sources):
                M = StarMosaic(frozenset([combo[0]]), frozenset(combo[1:]))
                self._node(M)
                yield M, None

    def _start_roots(self):
        TS, P = self.TS, self.P
        left = [t for t in self.T[1] if TS.holds(t, P.phi1)]
        right = [t for t in self.T[2] if TS.holds(t, P.phi2)]
        return self._roots_from(self._root_pairs(left, right))

    def _partner_roots(self, i, chi):
        TS, P = self.TS, self.P
        mine = [t for t in self.T[i] if TS.holds(t, chi)]
        if P.allow_empty:
            return self._one_sided(i, mine)
        if i == 1:
            return self._roots_from(self._root_pairs(mine, self.T[2]))
        return self._roots_from((a, b) for b, a in self._root_pairs(mine, self.T[1]))

    def _one_sided(self, i, mine):
        for t in mine:
            for st in self._sc_options(i, t, EMPTY, None):
                M = StarMosaic(frozenset([st]), frozenset()) if i == 1 else StarMosaic(frozenset(), frozenset([st]))
                self._node(M)
                yield M, None

    # -- fixpoints
    def _good(self, optimistic):
        """Surviving nodes: a set (greatest fixpoint) or, with levels, a list of sets."""
        nodes = [nd for nd in self.nodes.values() if nd.valid]
        if self.levels is None:
            alive = {nd.M for nd in nodes if optimistic or nd.groups is not None}
            while True:
                if not all(self._sat(grp, alive, optimistic) for _, _, grp in self.partners):
                    return set()
                drop = {nd.M for nd in nodes if nd.M in alive and nd.groups is not None
                        and not all(self._sat(g, alive, optimistic) for g in nd.groups)}
                if not drop:
                    return alive
                alive -= drop
        out = [{nd.M for nd in nodes}]
        for _ in range(self.levels):
            prev = out[-1]
            out.append({nd.M for nd in nodes if (nd.groups is None and optimistic) or
                        (nd.groups is not None and all(self._sat(g, prev, optimistic) for g in nd.groups))})
        return out

    @staticmethod
    def _sat(grp, alive, optimistic):
        return (optimistic and not grp.done) or any(c in alive for c, _ in grp.opts)

    def _top(self, good):
        return good if self.levels is None else good[self.levels]

    # -- main loop
    def run(self):
        while True:
            pess = self._good(False)
            top = self._top(pess)
            if any(c in top for c, _ in self.start.opts):
                return self._certificate(pess)
            opt = self._good(True)
            if not self._sat(self.start, self._top(opt), True):
                return None
            targets = self._frontier(opt, pess)
            if not targets:
                return None
            for kind, x in targets:
                self.spent += 1
                if self.spent > self.P.budget:
                    raise BudgetExceeded(f"star-type search spent {self.P.budget} steps")
                if kind == "expand":
                    self._expand(x)
                else:
                    try:
                        opt = next(x.gen)
                    except StopIteration:
                        x.done = True
                    else:
                        self._node(opt[0])
                        x.opts.append(opt)

    def _frontier(self, opt, pess):
        targets, seen_nodes, seen_groups = [], set(), set()
        stack = [(self.start, 0)] + [(grp, 0) for _, _, grp in self.partners]

        def layer(good, d):
            if self.levels is None:
                return good
            return good[max(0, self.levels - d)]

        while stack:
            grp, d = stack.pop()
            if id(grp) in seen_groups:
                continue
            seen_groups.add(id(grp))
            if any(c in layer(pess, d) for c, _ in grp.opts):
                continue
            nxt = [c for c, _ in grp.opts if c in layer(opt, d)]
            if not nxt:
                if not grp.done:
                    targets.append(("more", grp))
                continue
            nd = self.nodes[nxt[0]]
            if nd.M in seen_nodes or (self.levels is not None and d >= self.levels):
                continue
            seen_nodes.add(nd.M)
            if nd.groups is None:
                targets.append(("expand", nd))
                continue
            for g in nd.groups:
                stack.append((g, d + 1))
        return targets

    def _certificate(self, pess):
        P = self.P
        top = self._top(pess)
        start = next(c for c, _ in self.start.opts if c in top)
        order, level, witnesses = [start], {start: 0}, {}
        partners = [next(c for c, _ in grp.opts if c in top) for _, _, grp in self.partners]
        for M in partners:
            if M not in level:
                level[M] = 0
                order.append(M)
        k = 0
        while k < len(order):
            M = order[k]
            k += 1
            d = level[M]
            if self.levels is not None and d >= self.levels:
                continue
            good = top if self.levels is None else pess[self.levels - d - 1]
            nd = self.nodes[M]
            cands, relation = [], {S: set() for S in P.dirs}
            for grp in nd.groups:
                child, edges = next((c, e) for c, e in grp.opts if c in good)
                if child not in cands:
                    cands.append(child)
                j = cands.index(child)
                for i, st, st2 in edges:
                    relation[grp.S].add((i, st, j, st2))
                if child not in level:
                    level[child] = d + 1
                    order.append(child)
            w = SyntacticWitnessCert(M, cands, relation)
            for S in P.dirs:
                if P.shared(S):
                    succ = sorted({q[2] for q in relation[S]})
                    for q in relation[S]:
                        g = _find_g(q[1], S, q[2], q[3], succ, cands, q[0])
                        if g is not None:
                            w.g[(S,) + q] = g
            witnesses[M] = w
        mos = order
        cert = {
            "mosaics": mos,
            "root": 0,
            "witnesses": {mos.index(M): w for M, w in witnesses.items()},
            "levels": None if self.levels is None else [level[M] for M in mos],
        }
        return cert


# ---------------------------------------------------------------------------
# type-level pruning and the entry points

class _Classes:
    """Types per universal-diamond class, pruned by two-way counting."""

    def __init__(self, P: InverseProblem):
        self.P = P
        TS = P.TS
        self.by_U = {}
        for t in TS.types:
            self.by_U.setdefault(TS.udia_part(t), []).append(t)
        self._pruned = {}
        self._zero = {}

    def _zeros(self, t, S):
        TS = self.P.TS
        if S not in TS.keys:
            return 0
        z = self._zero.get((t, S))
        if z is None:
            _, up = TS.bounds(t, S)
            z = self._zero[(t, S)] = sum(1 << j for j, u in enumerate(up) if u == 0)
        return z

    def prune(self, T, U):
        TS, kb = self.P.TS, self.P.kb
        T = set(T)
        prof = lambda s, S: TS.profile(s, S) if S in TS.keys else 0  # noqa: E731
        while T:
            for u, chi in TS.udia_of:
                if (U >> u) & 1 and not any(TS.holds(s, chi) for s in T):
                    return set()
            bad = set()
            for S in TS.keys:
                iS = _inv(S)
                sg = {(prof(s, S), self._zeros(s, iS)) for s in T}
                memo = {}
                for t in T:
                    sig = (self._zeros(t, S), prof(t, iS), TS.req_key(t, S))
                    if sig not in memo:
                        z, pi, _ = sig
                        pool = {p: kb + 1 for p, zi in sg if not (p & z) and not (pi & zi)}
                        memo[sig] = TS.feasible(t, S, pool) is not None
                    if not memo[sig]:
                        bad.add(t)
            if not bad:
                break
            T -= bad
        return T

    def pruned(self, U):
        if U not in self._pruned:
            self._pruned[U] = self.prune(self.by_U[U], U)
        return self._pruned[U]

    def pairs(self):
        """Class pairs (U1, U2, T1, T2) that could host a root."""
        P, TS = self.P, self.P.TS
        left = [U for U in sorted(self.by_U) if any(TS.holds(t, P.phi1) for t in self.by_U[U])]
        right = [U for U in sorted(self.by_U) if any(TS.holds(t, P.phi2) for t in self.by_U[U])]
        for U1 in left:
            T1 = self.pruned(U1)
            if not any(TS.holds(t, P.phi1) for t in T1):
                continue
            for U2 in right:
                T2 = self.pruned(U2)
                if not any(TS.holds(t, P.phi2) for t in T2):
                    continue
                A, B = set(T1), set(T2)
                if not P.allow_empty:
                    # globally bisimilar structures realise the same keys on both sides
                    while True:
                        ka, kb_ = {P.key(t) for t in A}, {P.key(t) for t in B}
                        A2 = self.prune({t for t in A if P.key(t) in kb_}, U1)
                        B2 = self.prune({t for t in B if P.key(t) in ka}, U2)
                        if (A2, B2) == (A, B):
                            break
                        A, B = A2, B2
                keys1 = {P.key(t) for t in A if TS.holds(t, P.phi1)}
                if any(TS.holds(t, P.phi2) and P.key(t) in keys1 for t in B):
                    yield U1, U2, A, B


def _check_inputs(phi1, phi2, target, bounded):
    for f in (phi1, phi2):
        u = uses(f)
        if u.nominals:
            raise UnsupportedFragment("inputs must be nominal-free")
        if bounded and u.universal:
            raise UnsupportedFragment("the depth-bounded variant takes inputs without the universal modality")
    if target.graded or target.nominals:
        raise UnsupportedFragment(f"target {target.name} must be one of ML, ML^i, ML^u, ML^{{i,u}}")
    if bounded and target.universal:
        raise UnsupportedFragment("the depth-bounded variant is for targets without the universal modality")


def _decide(P: InverseProblem, levels):
    classes = _Classes(P)
    stats = {"class_pairs": 0, "steps": 0, "capped": False}
    exhausted = False
    for U1, U2, T1, T2 in classes.pairs():
        stats["class_pairs"] += 1
        search = _Search(P, T1, T2, levels)
        try:
            cert = search.run()
        except BudgetExceeded:
            cert = None
            exhausted = True
        stats["steps"] += search.spent
        stats["capped"] |= search.capped
        if cert is not None:
            ok, why = check_startype_certificate(P, cert)
            if not ok:  # pragma: no cover - would be a bug in the search
                raise AssertionError(f"star-type certificate failed: {why}")
            stats["mosaics"] = len(cert["mosaics"])
            return SepResult(False, True, P.rho, cert, stats)
    exact = stats["class_pairs"] == 0
    stats["budget_exhausted"] = exhausted
    return SepResult(True, exact, P.rho, None, stats)


def decide_separation_inverse(phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                              budget: int | None = None, support_cap: int = 3, width: int = 6) -> SepResult:
    """Separation for inputs with converse modalities (and the universal one).

    NotSeparable is exact: it comes with a family of star mosaics that passed
    ``check_startype_certificate``.  Separable is exact only when no class
    pair survives type pruning; otherwise it means no family turned up
    within the search caps.
    """
    _check_inputs(phi1, phi2, target, False)
    P = InverseProblem(phi1, phi2, target, mode, budget, support_cap, width)
    return _decide(P, None)


def decide_separation_inverse_bounded(phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                                      budget: int | None = None, support_cap: int = 3,
                                      width: int = 6) -> SepResult:
    """Depth-bounded variant: looks for mosaic words of length at most the modal depth."""
    _check_inputs(phi1, phi2, target, True)
    P = InverseProblem(phi1, phi2, target, mode, budget, support_cap, width)
    return _decide(P, max(1, P.md))
