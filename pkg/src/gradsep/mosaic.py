"""Mosaic elimination for (Craig) separation in inverse-free graded logics.

A mosaic is a pair of type sets (one per input formula) describing elements
that a counting-free bisimulation may link.  Two formulas are *not*
separable iff, for some nominal anchor ``h``, elimination of bad mosaics
leaves a mosaic with a phi1-type on the left and a phi2-type on the right.

Representation trick: the non-nominal survivors of every elimination round
are closed under taking non-empty sub-mosaics, so a round is stored as the
antichain of its maximal members ("slots").  Witness search then ranges over
sets of slots, and a type only matters through its side and its diamond
requirements, which keeps the checks small.

The module also exposes the literal, fully explicit versions of the
procedure (``enumerate_mosaics``, ``find_r_witness``, ``eliminate``) which the
test-suite uses as an oracle on tiny closures.
"""
from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations, product

from .counting import solve_counts
from .formula import (
    ClosureIndex, Formula, Fragment, Signature, big_and, dia, implies, modal_depth,
    nom, prop, signature_of, top, uses,
)
from .hintikka import TypeSpace
from .sat import UnsupportedFragment, anchors
from .semantics import Structure, model_check
from .bisim import BisimRelation, verify_bisimulation

__all__ = [
    "Mosaic", "WitnessCert", "SepResult", "BudgetExceeded", "SeparationProblem",
    "separation_signature", "craig_pad", "enumerate_mosaics", "find_r_witness",
    "verify_witness", "eliminate", "decide_separation", "decide_separation_bounded",
    "default_budget", "check_certificate", "unfold", "explicit_anchors",
    "decide_separation_explicit",
]


class BudgetExceeded(RuntimeError):
    pass


def default_budget() -> int:
    try:
        return int(os.environ.get("GRADSEP_BUDGET", "20000"))
    except ValueError:
        return 20000


@dataclass(frozen=True)
class Mosaic:
    m1: frozenset
    m2: frozenset

    def side(self, i):
        return self.m1 if i == 1 else self.m2

    def __le__(self, other):
        return self.m1 <= other.m1 and self.m2 <= other.m2

    def elements(self):
        return [(1, t) for t in sorted(self.m1)] + [(2, t) for t in sorted(self.m2)]


@dataclass
class WitnessCert:
    """An R-witness: candidate mosaics plus the edge relation.

    ``edges`` maps a source ``(side, type)`` of the mosaic to a list of targets
    ``(type, index into candidates, copy)`` on the same side.
    """
    mosaic: Mosaic
    rel: str
    candidates: list
    edges: dict


@dataclass
class SepResult:
    separable: bool
    exact: bool = True
    rho: Signature | None = None
    certificate: dict | None = None
    stats: dict = field(default_factory=dict)

    def __bool__(self):
        return self.separable

    @property
    def verdict(self):
        return "Separable" if self.separable else "NotSeparable"


# ---------------------------------------------------------------------------
# signatures and padding

def separation_signature(phi1: Formula, phi2: Formula, mode: str, target: Fragment) -> Signature:
    s1, s2 = signature_of(phi1), signature_of(phi2)
    if mode == "plain":
        rho = s1 | s2
    elif mode == "craig":
        rho = s1 & s2
    elif mode in ("unary", "unary-craig"):
        # only propositions must be shared; relations and constants are free
        rho = Signature(s1.props & s2.props, s1.rels | s2.rels, s1.consts | s2.consts)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not target.nominals:
        rho = Signature(rho.props, rho.rels, ())
    return rho


def craig_pad(phi: Formula, psi: Formula):
    """Add vacuous conjuncts so both formulas mention every symbol of either."""
    s1, s2 = signature_of(phi), signature_of(psi)

    def pad(f, mine, other):
        extra = []
        for a in sorted(other.props - mine.props):
            extra.append(implies(prop(a), prop(a)))
        for r in sorted(other.rels - mine.rels):
            extra.append(implies(dia(r, top()), dia(r, top())))
        for c in sorted(other.consts - mine.consts):
            extra.append(implies(nom(c), nom(c)))
        return big_and([f] + extra) if extra else f

    return pad(phi, s1, s2), pad(psi, s2, s1)


# ---------------------------------------------------------------------------
# problem context

class SeparationProblem:
    """Closure, types and the shared signature for one (phi1, phi2, target, mode)."""

    def __init__(self, phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                 budget: int | None = None):
        if uses(phi1).inverse or uses(phi2).inverse:
            raise UnsupportedFragment("inverse modalities: use the star-type procedure")
        if target.inverse or target.graded:
            raise UnsupportedFragment(f"target {target.name} must be counting-free and inverse-free")
        self.phi1, self.phi2 = phi1, phi2
        self.target = target
        self.mode = mode
        self.sigma = signature_of(phi1) | signature_of(phi2)
        self.rho = separation_signature(phi1, phi2, mode, target)
        self.C = ClosureIndex(phi1, phi2)
        self.TS = TypeSpace(self.C)
        self.kmax = max(1, self.TS.kmax)
        self._feas_memo = {}
        self._slot_memo = {}
        self._ok_memo = {}
        self.allow_empty = not target.universal
        self.budget = default_budget() if budget is None else budget
        TS = self.TS
        self.rho_keys = [k for k in TS.keys if k[0] in self.rho.rels]
        self.free_keys = [k for k in TS.keys if k[0] not in self.rho.rels]
        self.val_mask = sum(1 << TS.prop_bits[a] for a in self.rho.props if a in TS.prop_bits)
        self.val_mask |= sum(1 << TS.nom_bits[c] for c in self.rho.consts if c in TS.nom_bits)
        self.md = max(modal_depth(phi1), modal_depth(phi2))
        # a side only names the constants of its own formula and the shared ones
        self.side_consts = {1: signature_of(phi1).consts | set(self.rho.consts),
                            2: signature_of(phi2).consts | set(self.rho.consts)}
        self._side_types = {}

    def side_types(self, i):
        if i not in self._side_types:
            off = sum(1 << b for c, b in self.TS.nom_bits.items() if c not in self.side_consts[i])
            self._side_types[i] = [t for t in self.TS.types if not t & off]
        return self._side_types[i]

    # -- small helpers
    def val(self, t):
        return t & self.val_mask

    def f(self, M: Mosaic):
        return 1 if any(self.TS.is_nominal(t) for t in M.m1 | M.m2) else self.kmax

    def harmonic(self, M: Mosaic, N: Mosaic):
        U = self.TS.udia_part
        return all(U(t) == U(s) for i in (1, 2) for t in M.side(i) for s in N.side(i))

    def is_mosaic(self, M: Mosaic) -> bool:
        TS = self.TS
        if not M.m1 and not M.m2:
            return False
        if (not M.m1 or not M.m2) and not self.allow_empty:
            return False
        allt = M.m1 | M.m2
        if len({self.val(t) for t in allt}) > 1:
            return False
        for side in (M.m1, M.m2):
            if len({TS.udia_part(t) for t in side}) > 1:
                return False
            for c, b in TS.nom_bits.items():
                if sum((t >> b) & 1 for t in side) > 1:
                    return False
        return True

    # -- feasibility of one element against a set of slots
    def elem_feasible(self, side, t, key, slots, cover):
        """Successor counts for (side, t) over ``slots`` (list of Mosaic).

        With ``cover`` every slot must receive at least one successor (the
        (bisim) requirement for shared relations).  Returns
        (cover_profiles, profile -> count) or None.
        """
        TS = self.TS
        slot_profs = []
        for U in slots:
            profs = self._slot_profile(U, side, key)
            if not profs and cover:
                return None
            slot_profs.append(profs)
        mk = (key, TS.req_key(t, key), tuple(slot_profs), bool(cover))
        hit = self._feas_memo.get(mk, self._feas_memo)
        if hit is not self._feas_memo:
            return hit
        res = self._elem_feasible(t, key, slot_profs, cover, len(slots))
        self._feas_memo[mk] = res
        return res

    def cover_ok(self, side, t, key, slots):
        """Whether ``elem_feasible`` with coverage succeeds; slot order is ignored."""
        slot_profs = []
        for U in slots:
            profs = self._slot_profile(U, side, key)
            if not profs:
                return False
            slot_profs.append(profs)
        slot_profs.sort()
        mk = (key, self.TS.req_key(t, key), tuple(slot_profs))
        got = self._ok_memo.get(mk)
        if got is None:
            got = self._ok_memo[mk] = self._elem_feasible(t, key, slot_profs, True, len(slots)) is not None
        return got

    def _slot_profile(self, U, side, key):
        """Profile capacities of one side of a slot, as a sorted tuple."""
        mk = (U, side, key)
        got = self._slot_memo.get(mk)
        if got is None:
            fu = self.f(U)
            profs = Counter()
            for s in U.side(side):
                profs[self.TS.profile(s, key)] += fu
            got = self._slot_memo[mk] = tuple(sorted(profs.items()))
        return got

    def _elem_feasible(self, t, key, slot_profs, cover, nslots):
        lower, upper = self.TS.bounds(t, key)
        per_slot = []
        cap = Counter()
        for profs in slot_profs:
            per_slot.append([p for p, _ in profs])
            for p, n in profs:
                cap[p] += n
        slots = slot_profs
        limit = self.kmax + len(slots)
        cap = {p: min(n, limit) for p, n in cap.items()}
        if not cover or not slots:
            got = solve_counts(list(cap), [cap[p] for p in cap], lower, upper)
            if got is None:
                return None
            return (), {p: n for p, n in zip(cap, got) if n}
        seen = set()
        for choice in product(*per_slot):
            forced = Counter(choice)
            sig = tuple(sorted(forced.items()))
            if sig in seen:
                continue
            seen.add(sig)
            if any(forced[p] > cap[p] for p in forced):
                continue
            lo, up = list(lower), list(upper)
            bad = False
            for p, n in forced.items():
                for j in range(len(lo)):
                    if (p >> j) & 1:
                        lo[j] -= n
                        if up[j] is not None:
                            up[j] -= n
                            if up[j] < 0:
                                bad = True
            if bad:
                continue
            lo = [max(0, x) for x in lo]
            profs = list(cap)
            got = solve_counts(profs, [cap[p] - forced.get(p, 0) for p in profs], lo, up)
            if got is not None:
                counts = Counter({p: n for p, n in zip(profs, got) if n})
                counts.update(forced)
                return choice, dict(counts)
        return None

    def free_pool_feasible(self, side, t, key, slots):
        return self.elem_feasible(side, t, key, slots, cover=False)

    # -- explicit edge construction from a feasibility answer
    def realise(self, side, t, key, slots, answer, cover):
        """Turn profile counts into concrete targets (type, slot index, copy)."""
        TS = self.TS
        choice, counts = answer
        used = Counter()
        out = []
        remaining = dict(counts)
        if cover:
            for ui, p in enumerate(choice):
                U = slots[ui]
                s = min(s for s in U.side(side) if TS.profile(s, key) == p)
                out.append((s, ui, used[(s, ui)]))
                used[(s, ui)] += 1
                remaining[p] -= 1
        for p in sorted(remaining):
            n = remaining[p]
            for ui, U in enumerate(slots):
                if n <= 0:
                    break
                fu = self.f(U)
                for s in sorted(U.side(side)):
                    if n <= 0:
                        break
                    if TS.profile(s, key) != p:
                        continue
                    while n > 0 and used[(s, ui)] < fu:
                        out.append((s, ui, used[(s, ui)]))
                        used[(s, ui)] += 1
                        n -= 1
            assert n <= 0, "capacity bookkeeping out of sync"
        return out


# ---------------------------------------------------------------------------
# literal, explicit versions (oracle-grade, exponential)

def enumerate_mosaics(P: SeparationProblem, limit: int | None = None, nominal_free: bool = False):
    """All mosaics over the syntactic types, as a list.  Raises BudgetExceeded."""
    TS = P.TS
    limit = P.budget if limit is None else limit
    by_key = {1: {}, 2: {}}
    for i in (1, 2):
        for t in P.side_types(i):
            if nominal_free and TS.is_nominal(t):
                continue
            by_key[i].setdefault((P.val(t), TS.udia_part(t)), []).append(t)
    vals = sorted({v for i in (1, 2) for v, _ in by_key[i]})
    # None stands for "this side is empty"
    cls = {i: sorted({u for _, u in by_key[i]}) + [None] for i in (1, 2)}
    out = set()
    for v in vals:
        for u1 in cls[1]:
            for u2 in cls[2]:
                for q1 in _subsets(by_key[1].get((v, u1), [])):
                    for q2 in _subsets(by_key[2].get((v, u2), [])):
                        M = Mosaic(frozenset(q1), frozenset(q2))
                        if P.is_mosaic(M):
                            out.add(M)
                            if len(out) > limit:
                                raise BudgetExceeded(f"more than {limit} mosaics")
    return sorted(out, key=lambda M: (sorted(M.m1), sorted(M.m2)))


def _subsets(xs):
    for r in range(len(xs) + 1):
        yield from combinations(xs, r)


def _needs(P, M: Mosaic, key):
    lower = 0
    for i in (1, 2):
        for t in M.side(i):
            lo, _ = P.TS.bounds(t, key)
            lower += sum(lo)
    return lower


def find_r_witness(P: SeparationProblem, M: Mosaic, S, rel: str, limit: int | None = None):
    """Search an R-witness for M among the mosaics S (explicit oracle version)."""
    key = (rel, False)
    if key not in P.TS.keys:
        return WitnessCert(M, rel, [], {e: [] for e in M.elements()})
    cands = [N for N in S if P.harmonic(M, N)]
    elems = M.elements()
    if rel not in P.rho.rels:
        edges = {}
        for side, t in elems:
            ans = P.elem_feasible(side, t, key, cands, cover=False)
            if ans is None:
                return None
            edges[(side, t)] = P.realise(side, t, key, cands, ans, False)
        return WitnessCert(M, rel, cands, edges)
    bound = min(len(cands), max(1, _needs(P, M, key)))
    tried = 0
    limit = P.budget if limit is None else limit
    for r in range(0, bound + 1):
        for slots in combinations(cands, r):
            tried += 1
            if tried > limit:
                raise BudgetExceeded("witness search budget exhausted")
            slots = list(slots)
            edges = {}
            for side, t in elems:
                ans = P.elem_feasible(side, t, key, slots, cover=True)
                if ans is None:
                    break
                edges[(side, t)] = P.realise(side, t, key, slots, ans, True)
            else:
                return WitnessCert(M, rel, slots, edges)
    return None


def verify_witness(P: SeparationProblem, cert: WitnessCert):
    """Literal check of (harmony), (witness) and (bisim); returns (ok, condition)."""
    TS = P.TS
    M = cert.mosaic
    for N in cert.candidates:
        if not P.harmonic(M, N):
            return False, "harmony"
    for (side, t), targets in cert.edges.items():
        if t not in M.side(side):
            return False, "source"
        for s, ui, j in targets:
            N = cert.candidates[ui]
            if s not in N.side(side) or not 0 <= j < P.f(N):
                return False, "target"
        if len(set(targets)) != len(targets):
            return False, "duplicate edge"
    for side, t in M.elements():
        targets = cert.edges.get((side, t), [])
        for b in P.C.base:
            if b.kind == "dia" and b.rel == cert.rel and not b.inv:
                n = sum(1 for s, _, _ in targets if TS.holds(s, b.args[0]))
                if TS.holds(t, b) != (n >= b.k):
                    return False, "witness"
    if cert.rel in P.rho.rels:
        for ui in range(len(cert.candidates)):
            hit = [any(u == ui for _, u, _ in cert.edges.get(e, [])) for e in M.elements()]
            if any(hit) and not all(hit):
                return False, "bisim"
    return True, None


def _dia_partner(P, M, S):
    for i in (1, 2):
        for t in M.side(i):
            for u, chi in P.TS.udia_of:
                if (t >> u) & 1:
                    # partners live in the same pair of structures, hence harmonic
                    if not any(P.TS.holds(s, chi) for N in S if P.harmonic(M, N) for s in N.side(i)):
                        return False
    return True


def is_bad(P, M, S):
    for rel in P.TS.rels:
        if find_r_witness(P, M, S, rel) is None:
            return True
    return not _dia_partner(P, M, S)


def eliminate(P: SeparationProblem, S0, order=None, max_rounds=None):
    """Explicit elimination to the greatest fixpoint.

    ``order='sequential'`` removes a bad mosaic as soon as it is found;
    the default evaluates a whole round against the previous set.
    """
    S = list(S0)
    rounds = 0
    while max_rounds is None or rounds < max_rounds:
        rounds += 1
        if order == "sequential":
            changed = False
            for M in list(S):
                if is_bad(P, M, S):
                    S.remove(M)
                    changed = True
            if not changed:
                break
        elif order == "reverse":
            bad = [M for M in reversed(S) if is_bad(P, M, S)]
            if not bad:
                break
            S = [M for M in S if M not in bad]
        else:
            bad = [M for M in S if is_bad(P, M, S)]
            if not bad:
                break
            S = [M for M in S if M not in bad]
    return S


def explicit_anchors(P: SeparationProblem, mosaics):
    """All literal anchors: lists of mosaics h(N_c, i), one per named constant and side."""
    TS = P.TS
    need = [(c, i) for i in (1, 2) for c in sorted(P.side_consts[i])]
    cands = {(c, i): [M for M in mosaics if any((t >> TS.nom_bits[c]) & 1 for t in M.side(i))]
             for c, i in need}

    def consistent(h):
        for (c, i), M in h.items():
            for (d, j), N in h.items():
                named = any((t >> TS.nom_bits[d]) & 1 for t in M.side(j))
                if (named and N != M) or not P.harmonic(M, N):
                    return False
            if c in P.rho.consts and (c, 3 - i) in h and h[(c, 3 - i)] != M:
                return False
        return True

    def go(k, h):
        if k == len(need):
            yield sorted(set(h.values()), key=lambda M: (sorted(M.m1), sorted(M.m2)))
            return
        for M in cands[need[k]]:
            h[need[k]] = M
            if consistent(h):
                yield from go(k + 1, h)
            del h[need[k]]

    yield from go(0, {})


def decide_separation_explicit(P: SeparationProblem, limit: int | None = None) -> SepResult:
    """Literal procedure over all mosaics; exponential, meant as a test oracle."""
    allm = enumerate_mosaics(P, limit)
    plain = [M for M in allm if not any(P.TS.is_nominal(t) for t in M.m1 | M.m2)]
    for hms in explicit_anchors(P, allm):
        S = eliminate(P, plain + hms)
        if not all(M in S for M in hms):
            continue
        for M in S:
            harmonic = all(P.harmonic(M, N) for N in hms)
            if harmonic and any(P.TS.holds(t, P.phi1) for t in M.m1) and \
                    any(P.TS.holds(t, P.phi2) for t in M.m2):
                return SepResult(False, True, P.rho, {"star": M, "anchor": hms, "survivors": S})
    return SepResult(True, True, P.rho)


# ---------------------------------------------------------------------------
# the efficient procedure

class _Round:
    """Witness checks against one fixed set of slots."""

    def __init__(self, P: SeparationProblem, slots, budget):
        self.P = P
        self.slots = slots
        self.budget = budget
        self.exact = True
        self._subs = {}
        # availability for unshared relations: any slot, no coverage duty
        self.sets = {}

    def subsets(self, key):
        """Slot subsets up to swapping slots that look alike along ``key``.

        Two slots with the same profile capacities on both sides serve the
        same elements, so only the number taken from each such class matters.
        """
        P = self.P
        classes = {}
        for i, U in enumerate(self.slots):
            sig = (P._slot_profile(U, 1, key), P._slot_profile(U, 2, key))
            classes.setdefault(sig, []).append(i)
        groups = list(classes.values())
        sizes = [len(g) for g in groups]
        out = []
        for v in (v for r in range(sum(sizes) + 1) for v in _compositions(r, sizes)):
            out.append(tuple(sorted(i for g, n in zip(groups, v) for i in g[:n])))
            if len(out) > self.budget:
                self.exact = False
                break
        return out

    def g_sets(self, key, elems):
        """For each slot subset, which elements can be served with coverage."""
        P = self.P
        groups = {}
        for side, t in elems:
            groups.setdefault((side, P.TS.req_key(t, key)), []).append((side, t))
        res = []
        for idx in self._subset_list(key):
            slots = [self.slots[i] for i in idx]
            good = set()
            for (side, _), members in groups.items():
                if P.cover_ok(side, members[0][1], key, slots):
                    good.update(members)
            res.append((idx, frozenset(good)))
        return res

    def _subset_list(self, key):
        if key not in self._subs:
            self._subs[key] = self.subsets(key)
        return self._subs[key]

    def witness_for(self, key, elems):
        """A slot subset serving every element, or None."""
        P = self.P
        reps = {(side, P.TS.req_key(t, key)): t for side, t in elems}
        for idx in self._subset_list(key):
            slots = [self.slots[i] for i in idx]
            if all(P.cover_ok(side, t, key, slots) for (side, _), t in reps.items()):
                return idx
        return None


def _compositions(total, caps):
    """Vectors v with 0 <= v[i] <= caps[i] and sum(v) == total, lexicographically."""
    if not caps:
        if total == 0:
            yield ()
        return
    rest = sum(caps[1:])
    for n in range(max(0, total - rest), min(caps[0], total) + 1):
        for tail in _compositions(total - n, caps[1:]):
            yield (n,) + tail


def _maximal(sets):
    sets = sorted(set(sets), key=lambda m: -(len(m.m1) + len(m.m2)))
    out = []
    for M in sets:
        if not any(M <= N for N in out):
            out.append(M)
    return out


class _ClassRun:
    """Elimination inside one pair (U1, U2) of universal-diamond classes."""

    def __init__(self, P: SeparationProblem, U1, U2):
        self.P = P
        self.U = (U1, U2)
        TS = P.TS
        self.types = {i: [t for t in P.side_types(i) if TS.udia_part(t) == U] for i, U in ((1, U1), (2, U2))}
        self.plain = {i: [t for t in self.types[i] if not TS.is_nominal(t)] for i in (1, 2)}
        vals = sorted({P.val(t) for i in (1, 2) for t in self.plain[i]})
        start = []
        for v in vals:
            M = Mosaic(frozenset(t for t in self.plain[1] if P.val(t) == v),
                       frozenset(t for t in self.plain[2] if P.val(t) == v))
            if P.is_mosaic(M):
                start.append(M)
        self.start = start

    # -- nominal anchors
    def anchors(self):
        """Yield (cores, hms): nominal cores per block and their largest h-mosaics.

        Extras (non-nominal types bisimilar to a named element) start out
        maximal and only shrink during elimination.
        """
        P, TS = self.P, self.P.TS
        cs = {i: sorted(P.side_consts[i]) for i in (1, 2)}
        for tau1 in _side_anchors(TS, self.types[1], cs[1]):
            for tau2 in _side_anchors(TS, self.types[2], cs[2]):
                if any(P.val(tau1[c]) != P.val(tau2[c]) for c in P.rho.consts):
                    continue
                nom_types = [(1, t) for t in sorted(set(tau1.values()))] + \
                            [(2, t) for t in sorted(set(tau2.values()))]
                for blocks in _partitions(nom_types):
                    if not self._blocks_ok(blocks, tau1, tau2):
                        continue
                    hms = self._initial(blocks)
                    if hms is not None:
                        yield hms

    def _blocks_ok(self, blocks, tau1, tau2):
        P = self.P
        where = {}
        for bi, blk in enumerate(blocks):
            if len({P.val(t) for _, t in blk}) > 1:
                return False
            for e in blk:
                where[e] = bi
        return all(where[(1, tau1[c])] == where[(2, tau2[c])] for c in P.rho.consts)

    def _initial(self, blocks):
        P = self.P
        out = []
        for blk in blocks:
            v = P.val(blk[0][1])
            core = {i: frozenset(t for s, t in blk if s == i) for i in (1, 2)}
            pinned = any(P.TS.nom_bits[c] is not None and (t >> P.TS.nom_bits[c]) & 1
                         for _, t in blk for c in P.rho.consts)
            side = {}
            for i in (1, 2):
                extra = () if pinned else [t for t in self.plain[i] if P.val(t) == v]
                side[i] = core[i] | frozenset(extra)
            M = Mosaic(side[1], side[2])
            if not P.is_mosaic(M):
                return None
            out.append((Mosaic(core[1], core[2]), M))
        return out

    # -- elimination
    def run(self, anchor, max_rounds=None):
        """Yield surviving fixpoints (maxima, hms, rounds, exact).

        ``anchor`` is a list of (core, h-mosaic) pairs.  Non-nominal survivors
        are kept as maximal mosaics; an h-mosaic may lose extras, and when it
        can shrink in incomparable ways each way is explored.
        """
        P = self.P
        seen = set()
        stack = [(tuple(self.start), tuple(anchor), 0)]
        while stack:
            maxima, hstate, rounds = stack.pop()
            key = (frozenset(maxima), hstate)
            if key in seen:
                continue
            seen.add(key)
            hms = [M for _, M in hstate]
            slots = list(maxima) + hms
            rnd = _Round(P, slots, P.budget)
            bad = self._bad_types(slots)
            options = []
            for core, M in hstate:
                if any(t in bad[i] for i in (1, 2) for t in core.side(i)):
                    options = None
                    break
                M2 = Mosaic(M.m1 - bad[1], M.m2 - bad[2])
                opts = [N for N in self._good_parts(M2, rnd) if core <= N] if P.is_mosaic(M2) else []
                if not opts:
                    options = None
                    break
                options.append([(core, N) for N in opts])
            if options is None:
                continue
            new = []
            for M in maxima:
                M2 = Mosaic(M.m1 - bad[1], M.m2 - bad[2])
                if M2.m1 or M2.m2:
                    new.extend(self._good_parts(M2, rnd))
            new = tuple(_maximal(new))
            fixed = set(new) == set(maxima) and all(o == [h] for o, h in zip(options, hstate))
            if fixed:
                yield list(maxima), list(hstate), rounds + 1, rnd.exact
                continue
            if max_rounds is not None and rounds + 1 >= max_rounds:
                for combo in product(*options):
                    yield list(new), list(combo), rounds + 1, rnd.exact
                continue
            for combo in product(*options):
                stack.append((new, tuple(combo), rounds + 1))

    def _bad_types(self, slots):
        P, TS = self.P, self.P.TS
        bad = {1: set(), 2: set()}
        for i in (1, 2):
            present = {t for M in slots for t in M.side(i)}
            U = self.U[i - 1]
            for u, chi in TS.udia_of:
                if (U >> u) & 1 and not any(TS.holds(s, chi) for s in present):
                    bad[i] = set(present)
                    break
            else:
                for key in P.free_keys:
                    memo = {}
                    for t in present:
                        rk = TS.req_key(t, key)
                        if rk not in memo:
                            memo[rk] = P.elem_feasible(i, t, key, slots, cover=False) is not None
                        if not memo[rk]:
                            bad[i].add(t)
        return bad

    def _good_parts(self, M, rnd):
        """Maximal sub-mosaics of M that have a witness for every shared relation."""
        P = self.P
        elems = M.elements()
        parts = [frozenset(elems)]
        for key in P.rho_keys:
            gs = {g & frozenset(elems) for _, g in rnd.g_sets(key, elems)}
            gs = [g for g in gs if g]
            nxt = set()
            for a in parts:
                for g in gs:
                    x = a & g
                    if x:
                        nxt.add(x)
            parts = _max_sets(nxt)
        out = []
        for a in parts:
            N = Mosaic(frozenset(t for s, t in a if s == 1), frozenset(t for s, t in a if s == 2))
            if P.is_mosaic(N):
                out.append(N)
        return out


def _side_anchors(TS, pool, consts):
    """Consistent maps constant -> type for the constants a side interprets."""
    if not consts:
        yield {}
        return
    yield from anchors(TS, pool, consts)


def _max_sets(sets):
    sets = sorted(sets, key=len, reverse=True)
    out = []
    for s in sets:
        if not any(s <= o for o in out):
            out.append(s)
    return out


def _partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


# ---------------------------------------------------------------------------
# decisions

def _classes_for(P):
    TS = P.TS
    u1 = sorted({TS.udia_part(t) for t in P.side_types(1) if TS.holds(t, P.phi1)})
    u2 = sorted({TS.udia_part(t) for t in P.side_types(2) if TS.holds(t, P.phi2)})
    return [(a, b) for a in u1 for b in u2]


def _star(P, maxima):
    for M in maxima:
        t1 = [t for t in sorted(M.m1) if P.TS.holds(t, P.phi1)]
        t2 = [t for t in sorted(M.m2) if P.TS.holds(t, P.phi2)]
        if t1 and t2:
            return M, t1[0], t2[0]
    return None


def _decide(P: SeparationProblem, max_rounds=None, want_models=True) -> SepResult:
    exact = True
    stats = {"classes": 0, "anchors": 0, "rounds": 0}
    for U1, U2 in _classes_for(P):
        run = _ClassRun(P, U1, U2)
        stats["classes"] += 1
        for anchor in run.anchors():
            stats["anchors"] += 1
            if stats["anchors"] > P.budget:
                return SepResult(True, False, P.rho, None, stats)
            for maxima, hstate, rounds, rexact in run.run(anchor, max_rounds):
                stats["rounds"] = max(stats["rounds"], rounds)
                exact = exact and rexact
                hms = [M for _, M in hstate]
                hit = _star(P, maxima + hms)
                if hit is None:
                    continue
                M, t1, t2 = hit
                if max_rounds is None:
                    cert = _certificate(P, maxima, hms, M, t1, t2, want_models)
                else:
                    # survivors of a cut-off run need not have witnesses, so no table
                    cert = {"rho": P.rho, "star": M, "types": (t1, t2), "anchor": hms,
                            "survivors": maxima, "witnesses": {}, "models": None}
                return SepResult(False, True, P.rho, cert, stats)
    return SepResult(True, exact, P.rho, None, stats)


def decide_separation(phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                      budget: int | None = None, models: bool = True) -> SepResult:
    """Separable iff no anchored surviving mosaic pairs a phi1-type with a phi2-type."""
    P = SeparationProblem(phi1, phi2, target, mode, budget)
    return _decide(P, None, models)


def decide_separation_bounded(phi1: Formula, phi2: Formula, target: Fragment, mode: str = "craig",
                              budget: int | None = None, models: bool = True) -> SepResult:
    """Depth-bounded variant for targets and inputs without the universal modality.

    Only as many elimination rounds as the larger modal depth are run; the
    surviving mosaics then unfold into models truncated at that depth.
    """
    if target.universal or uses(phi1).universal or uses(phi2).universal:
        raise UnsupportedFragment("the bounded variant needs inputs and target without the universal modality")
    P = SeparationProblem(phi1, phi2, target, mode, budget)
    return _decide(P, max(1, P.md), models)


# ---------------------------------------------------------------------------
# certificates

def _witness_table(P, slots):
    """WitnessCert for every slot and relation, computed against ``slots``."""
    table = {}
    rnd = _Round(P, slots, P.budget)
    for si, M in enumerate(slots):
        for rel in P.TS.rels:
            key = (rel, False)
            elems = M.elements()
            if key in P.rho_keys:
                idx = rnd.witness_for(key, elems)
                assert idx is not None, "surviving mosaic lost its witness"
                cands = [slots[i] for i in idx]
                edges = {}
                for side, t in elems:
                    ans = P.elem_feasible(side, t, key, cands, True)
                    edges[(side, t)] = P.realise(side, t, key, cands, ans, True)
                cert = WitnessCert(M, rel, cands, edges)
                cert.slot_ids = list(idx)
            else:
                cands = [N for N in slots if P.harmonic(M, N)]
                edges = {}
                for side, t in elems:
                    ans = P.elem_feasible(side, t, key, cands, False)
                    assert ans is not None, "surviving type lost its witness"
                    edges[(side, t)] = P.realise(side, t, key, cands, ans, False)
                cert = WitnessCert(M, rel, cands, edges)
                cert.slot_ids = [slots.index(N) for N in cands]
            table[(si, rel)] = cert
    return table


def _certificate(P, maxima, hms, M, t1, t2, want_models):
    slots = list(maxima) + list(hms)
    table = _witness_table(P, slots)
    cert = {
        "rho": P.rho,
        "star": M,
        "types": (t1, t2),
        "anchor": hms,
        "survivors": list(maxima),
        "witnesses": table,
        "models": None,
    }
    diamond_free = not (P.target.universal or uses(P.phi1).universal or uses(P.phi2).universal)
    if want_models and diamond_free:
        cert["models"] = unfold(P, slots, table, slots.index(M), t1, t2, len(maxima))
    return cert


def unfold(P, slots, table, star_index, t1, t2, n_plain, depth=None):
    """Truncated word models for both sides plus the mosaic-sequence relation.

    Words start at the star mosaic (with the chosen phi_i-type) or at an
    anchor mosaic; children follow the witness edges; anchor mosaics are
    never entered as children, edges go back to their root words instead.
    """
    depth = max(1, P.md) if depth is None else depth
    TS = P.TS
    out = {}
    for side, tstar in ((1, t1), (2, t2)):
        words = []     # (type, slot index, copy, path) ; path = tuple of (rel, slot)
        index = {}

        def add(w):
            if w not in index:
                index[w] = len(words)
                words.append(w)
            return index[w]

        roots = [(tstar, star_index, 0, ())]
        for si in range(n_plain, len(slots)):
            for t in sorted(slots[si].side(side)):
                roots.append((t, si, 0, ()))
        for r in roots:
            add(r)
        edges = {rel: set() for rel in TS.rels}
        i = 0
        while i < len(words):
            t, si, j, path = words[i]
            if len(path) < depth:
                for rel in TS.rels:
                    cert = table[(si, rel)]
                    for s, ui, jj in cert.edges.get((side, t), []):
                        tgt_slot = cert.slot_ids[ui]
                        if tgt_slot >= n_plain:
                            tgt = add((s, tgt_slot, 0, ()))
                        else:
                            tgt = add((s, tgt_slot, jj, path + ((rel, tgt_slot),)))
                        edges[rel].add((i, tgt))
            i += 1
        labels = [_word_label(w, k) for k, w in enumerate(words)]
        props = {a: [k for k, w in enumerate(words) if (w[0] >> b) & 1] for a, b in TS.prop_bits.items()}
        consts = {}
        for c, b in TS.nom_bits.items():
            for k, w in enumerate(words):
                if not w[3] and w[1] >= n_plain and (w[0] >> b) & 1:
                    consts[c] = k
        A = Structure(labels, props, {r: sorted(e) for r, e in edges.items()}, consts)
        out[side] = (A, words)
    (A1, w1), (A2, w2) = out[1], out[2]
    shape = {}
    for k, w in enumerate(w2):
        shape.setdefault((w[1], w[3]), []).append(k)
    pairs = frozenset((a, b) for a, w in enumerate(w1) for b in shape.get((w[1], w[3]), []))
    frag = Fragment(False, False, P.target.nominals, P.target.universal)
    beta = BisimRelation(pairs, frag, P.rho)
    return {"A1": A1, "a1": 0, "A2": A2, "a2": 0, "beta": beta, "depth": depth}


def _word_label(w, k):
    return f"w{k}"


def check_certificate(P: SeparationProblem, cert: dict):
    """Re-verify a NotSeparable certificate; returns (ok, reason)."""
    for (si, rel), wc in cert["witnesses"].items():
        ok, why = verify_witness(P, wc)
        if not ok:
            return False, f"witness {rel} of slot {si}: {why}"
    m = cert.get("models")
    if m is None:
        return True, None
    if not model_check(m["A1"], m["a1"], P.phi1):
        return False, "phi1 fails in model 1"
    if not model_check(m["A2"], m["a2"], P.phi2):
        return False, "phi2 fails in model 2"
    if (m["a1"], m["a2"]) not in m["beta"].pairs:
        return False, "roots not related"
    v = verify_bisimulation(m["beta"], m["A1"], m["A2"])
    if not v:
        return False, f"bisimulation: {v.condition} at {v.pair}"
    return True, None
