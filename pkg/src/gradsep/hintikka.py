"""Hintikka types over a closure, shared by the SAT and mosaic procedures."""
from __future__ import annotations

from itertools import product

from .counting import requirements, solve_counts
from .formula import AND, DIA, NOM, NOT, PROP, UDIA, ClosureIndex

__all__ = ["TypeSpace"]


class TypeSpace:
    """Syntactic types of a closure and the bookkeeping the witness checks need.

    A type is an int: bit ``i`` set means ``C.base[i]`` is in the type.  Free
    choices are props, nominals, diamonds (monotone per grade chain) and
    universal diamonds; conjunctions are then forced.  The only other filter
    is ``chi in t  =>  E chi in t`` whenever ``E chi`` is in the closure.
    """

    def __init__(self, C: ClosureIndex):
        self.C = C
        base = C.base
        self.nbits = len(base)
        self.atom_bits = [i for i, b in enumerate(base) if b.kind in (PROP, NOM, UDIA)]
        self.nom_bits = {b.name: i for i, b in enumerate(base) if b.kind == NOM}
        self.nom_mask = sum(1 << i for i in self.nom_bits.values())
        self.udia_bits = [i for i, b in enumerate(base) if b.kind == UDIA]
        self.udia_mask = sum(1 << i for i in self.udia_bits)
        self.prop_bits = {b.name: i for i, b in enumerate(base) if b.kind == PROP}
        # graded diamonds grouped by (rel, inv) and then by body
        chains = {}
        for i, b in enumerate(base):
            if b.kind == DIA:
                chains.setdefault((b.rel, b.inv, b.args[0]), []).append((b.k, i))
        self.chains = [sorted(v) for _, v in sorted(chains.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].uid))]
        self.keys = {}  # (rel, inv) -> dict with bodies, grades
        for (rel, inv, body), v in sorted(chains.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].uid)):
            d = self.keys.setdefault((rel, inv), {"bodies": [], "grades": []})
            d["bodies"].append(body)
            d["grades"].append(sorted(v))
        for d in self.keys.values():
            d["dia_mask"] = sum(1 << i for g in d["grades"] for _, i in g)
        self.rels = sorted({r for r, _ in self.keys})
        self.ands = [(i, b.args[0], b.args[1]) for i, b in enumerate(base) if b.kind == AND]
        # E chi constraints: (bit of E chi, chi)
        self.udia_of = [(i, b.args[0]) for i, b in enumerate(base) if b.kind == UDIA]
        self.kmax = max((k for ch in self.chains for k, _ in ch), default=0)
        self._types = None
        self._prof = {}

    # -- membership
    def holds(self, t: int, f) -> bool:
        return self.C.holds(t, f)

    def _complete(self, t: int) -> int:
        pos = self.C.pos
        t |= 1  # top is base[0]
        for i, a, b in self.ands:
            va = not (t >> pos[a.args[0]]) & 1 if a.kind == NOT else (t >> pos[a]) & 1
            vb = not (t >> pos[b.args[0]]) & 1 if b.kind == NOT else (t >> pos[b]) & 1
            if va and vb:
                t |= 1 << i
        return t

    def enumerate(self, udia=None):
        """All syntactic types, generated lazily.

        With ``udia`` given, only types whose universal-diamond part equals it.
        """
        fixed = set(self.udia_bits) if udia is not None else set()
        groups = [[0, 1 << i] for i in self.atom_bits if i not in fixed]
        if udia is not None:
            groups.append([udia & self.udia_mask])
        for ch in self.chains:
            opts = [0]
            acc = 0
            for _, i in ch:
                acc |= 1 << i
                opts.append(acc)
            groups.append(opts)
        for parts in product(*groups):
            t = self._complete(sum(parts))
            if all(not self.holds(t, chi) or (t >> u) & 1 for u, chi in self.udia_of):
                yield t

    @property
    def types(self):
        if self._types is None:
            self._types = list(self.enumerate())
        return self._types

    # -- pieces of a type
    def udia_part(self, t):
        return t & self.udia_mask

    def nominals_in(self, t):
        return [c for c, i in self.nom_bits.items() if (t >> i) & 1]

    def is_nominal(self, t):
        return bool(t & self.nom_mask)

    def profile(self, s: int, key) -> int:
        """Which bodies of ``key``'s diamonds hold in s (bitmask)."""
        memo = self._prof.setdefault(key, {})
        p = memo.get(s)
        if p is None:
            p = 0
            for j, body in enumerate(self.keys[key]["bodies"]):
                if self.holds(s, body):
                    p |= 1 << j
            memo[s] = p
        return p

    def bounds(self, t: int, key):
        grades = [[(k, bool((t >> i) & 1)) for k, i in g] for g in self.keys[key]["grades"]]
        return requirements(grades)

    def req_key(self, t: int, key):
        return t & self.keys[key]["dia_mask"]

    def feasible(self, t: int, key, pool):
        """``pool`` maps profile -> capacity; returns profile -> count or None."""
        lower, upper = self.bounds(t, key)
        profs = list(pool)
        got = solve_counts(profs, [pool[p] for p in profs], lower, upper)
        if got is None:
            return None
        return {p: n for p, n in zip(profs, got) if n}
