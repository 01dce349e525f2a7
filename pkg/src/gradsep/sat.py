"""Satisfiability for the inverse-free graded fragments, plus a brute-force oracle.

``sat_check`` runs type elimination: a type survives while, for every
relation, some choice of successor counts over the surviving types meets its
graded diamonds.  Nominal types are fixed up front by an anchor (one type per
constant, at most one element each), and everything happens inside one
universal-diamond class.  A positive answer always comes with a finite model
that has been model checked.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement, product

import numpy as np

from .formula import (
    AND, DIA, NOM, NOT, PROP, TOP, UDIA, ClosureIndex, Formula, Fragment,
    conj, fragment_check, neg, signature_of, subformulas, uses,
)
from .hintikka import TypeSpace
from .semantics import Structure, model_check

__all__ = [
    "SatResult", "UnsupportedFragment", "enumerate_hintikka", "sat_check",
    "is_valid", "entails", "bounded_model_search",
]


class UnsupportedFragment(ValueError):
    pass


@dataclass
class SatResult:
    sat: bool
    model: Structure | None = None
    point: int | None = None
    bound: int | None = None

    def __bool__(self):
        return self.sat

    def __repr__(self):
        if self.sat:
            return f"Sat({self.model!r}, point={self.point})"
        return f"NoneUpTo({self.bound})" if self.bound is not None else "Unsat"


def enumerate_hintikka(C: ClosureIndex):
    return TypeSpace(C).enumerate()


def _check_input(phi: Formula, F: Fragment | None):
    if uses(phi).inverse or (F is not None and F.inverse):
        raise UnsupportedFragment("satisfiability is implemented for inverse-free fragments only")
    if F is not None and not fragment_check(phi, F):
        raise UnsupportedFragment(f"formula is not in {F.name}")


def anchors(TS: TypeSpace, pool, consts=None):
    """Consistent maps constant -> type (one type per constant) drawn from pool."""
    consts = sorted(TS.nom_bits if consts is None else consts)
    cands = {c: [t for t in pool if (t >> TS.nom_bits[c]) & 1] for c in consts}

    def go(i, h):
        if i == len(consts):
            yield dict(h)
            return
        c = consts[i]
        for t in cands[c]:
            ok = True
            for d, s in h.items():
                if ((t >> TS.nom_bits[d]) & 1) != (s == t) or ((s >> TS.nom_bits[c]) & 1) != (s == t):
                    ok = False
                    break
            if ok:
                h[c] = t
                yield from go(i + 1, h)
                del h[c]

    yield from go(0, {})


def _cap(TS, t):
    return 1 if TS.is_nominal(t) else max(1, TS.kmax)


def _pool(TS, S, key):
    pool = {}
    for s in S:
        p = TS.profile(s, key)
        pool[p] = min(max(1, TS.kmax), pool.get(p, 0) + _cap(TS, s))
    return pool


def eliminate(TS: TypeSpace, allowed, U: int):
    """Greatest set of allowed types whose diamonds can all be met inside it."""
    S = set(allowed)
    while S:
        for u, chi in TS.udia_of:
            if (U >> u) & 1 and not any(TS.holds(s, chi) for s in S):
                return set()
        bad = set()
        for key in TS.keys:
            pool = _pool(TS, S, key)
            memo = {}
            for t in S:
                rk = TS.req_key(t, key)
                if rk not in memo:
                    memo[rk] = TS.feasible(t, key, pool) is not None
                if not memo[rk]:
                    bad.add(t)
        if not bad:
            return S
        S -= bad
    return S


def sat_check(phi: Formula, F: Fragment | None = None) -> SatResult:
    _check_input(phi, F)
    TS = TypeSpace(ClosureIndex(phi))
    classes = {}
    for t in TS.types:
        classes.setdefault(TS.udia_part(t), []).append(t)
    for U in sorted(classes):
        ts = classes[U]
        if not any(TS.holds(t, phi) for t in ts):
            continue
        plain = [t for t in ts if not TS.is_nominal(t)]
        for h in anchors(TS, ts):
            hs = set(h.values())
            S = eliminate(TS, plain + sorted(hs), U)
            if not hs <= S:
                continue
            goal = [t for t in sorted(S) if TS.holds(t, phi)]
            if not goal:
                continue
            model, point = build_model(TS, S, h, U, goal[0])
            assert model_check(model, point, phi), "extracted model fails verification"
            return SatResult(True, model, point)
    return SatResult(False)


def _choose_successors(TS, S, t, key, pool):
    counts = TS.feasible(t, key, pool)
    out = []
    for p, n in sorted(counts.items()):
        members = sorted((s for s in S if TS.profile(s, key) == p), key=lambda s: (TS.is_nominal(s), s))
        for s in members:
            if n <= 0:
                break
            take = min(n, _cap(TS, s))
            out.append((s, take))
            n -= take
        assert n <= 0
    return out


def build_model(TS: TypeSpace, S, h, U, start):
    """One block: copies of the reachable surviving types, edges per chosen counts."""
    pools = {key: _pool(TS, S, key) for key in TS.keys}
    roots = [start] + sorted(set(h.values()))
    for u, chi in TS.udia_of:
        if (U >> u) & 1:
            roots.append(min(s for s in S if TS.holds(s, chi)))
    succ = {}
    seen = []
    todo = list(dict.fromkeys(roots))
    mark = set(todo)
    while todo:
        t = todo.pop(0)
        seen.append(t)
        succ[t] = {}
        for key in TS.keys:
            picks = _choose_successors(TS, S, t, key, pools[key])
            succ[t][key] = picks
            for s, _ in picks:
                if s not in mark:
                    mark.add(s)
                    todo.append(s)
    ids = {}
    labels = []
    for n, t in enumerate(seen):
        for j in range(_cap(TS, t)):
            ids[(t, j)] = len(labels)
            labels.append(f"t{n}" if TS.is_nominal(t) else f"t{n}.{j}")
    props = {p: [ids[(t, j)] for t in seen for j in range(_cap(TS, t)) if (t >> i) & 1]
             for p, i in TS.prop_bits.items()}
    rels = {r: [] for r in TS.rels}
    for t in seen:
        for (rel, inv), picks in succ[t].items():
            for j in range(_cap(TS, t)):
                for s, n in picks:
                    for i in range(n):
                        rels[rel].append((ids[(t, j)], ids[(s, i)]))
    consts = {c: ids[(t, 0)] for c, t in h.items()}
    return Structure(labels, props, rels, consts), ids[(start, 0)]


def is_valid(phi: Formula, F: Fragment | None = None) -> bool:
    return not sat_check(neg(phi), F)


def entails(phi: Formula, psi: Formula, F: Fragment | None = None) -> bool:
    return not sat_check(conj(phi, neg(psi)), F)


# ---------------------------------------------------------------------------
# brute-force oracle
#
# Extensions are m-bit masks held in numpy arrays of shape (labelings, matrices);
# successor counts come from a popcount table on row/column masks.

_BATCH = 1 << 21


def _labelings(m, nprops, consts):
    full = (1 << len(consts)) - 1
    labs = [(p, c) for c in range(full + 1) for p in range(1 << nprops)]
    for first in labs:
        for rest in combinations_with_replacement(labs, m - 1):
            cm = [first[1]] + [r[1] for r in rest]
            if sum(cm) == full and _disjoint(cm):
                yield (first,) + rest


def _disjoint(masks):
    acc = 0
    for x in masks:
        if acc & x:
            return False
        acc |= x
    return True


def _rows_cols(codes, m):
    """Row masks (successors) and column masks (predecessors) per element."""
    full = (1 << m) - 1
    rows = [((codes >> (m * x)) & full).astype(np.uint16) for x in range(m)]
    cols = []
    for x in range(m):
        c = np.zeros(np.shape(codes), dtype=np.uint16)
        for y in range(m):
            c |= (((codes >> (y * m + x)) & 1) << y).astype(np.uint16)
        cols.append(c)
    return rows, cols


def _evaluate(nodes, m, atoms, nbrs, pop):
    full = np.uint16((1 << m) - 1)
    val = {}
    for f in nodes:
        k = f.kind
        if k == TOP:
            v = np.full((1, 1), full, dtype=np.uint16)
        elif k in (PROP, NOM):
            v = atoms[(k, f.name)]
        elif k == NOT:
            v = ~val[f.args[0]] & full
        elif k == AND:
            v = val[f.args[0]] & val[f.args[1]]
        elif k == DIA:
            rows = nbrs[f.rel][1 if f.inv else 0]
            body = val[f.args[0]]
            v = np.zeros(np.broadcast_shapes(body.shape, rows[0].shape), dtype=np.uint16)
            for x in range(m):
                v |= (pop[rows[x] & body] >= f.k).astype(np.uint16) << x
        elif k == UDIA:
            v = np.where(val[f.args[0]] != 0, full, np.uint16(0))
        else:  # pragma: no cover
            raise AssertionError(k)
        val[f] = v
    return val[nodes[-1]]


def bounded_model_search(phi: Formula, n: int) -> SatResult:
    """Exhaustive search over structures with at most n elements.

    The point is element 0; the remaining elements carry non-decreasing
    labels, which loses nothing because they are interchangeable.  The first
    relation is enumerated as a numpy batch, any others in a Python loop, so
    cost grows like 2^(m^2 * #relations).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sig = signature_of(phi)
    props, rels, consts = sorted(sig.props), sorted(sig.rels), sorted(sig.consts)
    nodes = subformulas(phi)
    for m in range(1, n + 1):
        found = _search(nodes, m, props, rels, consts)
        if found is not None:
            labeling, codes = found
            return SatResult(True, _to_structure(m, props, rels, consts, labeling, codes), 0)
    return SatResult(False, bound=n)


def _atoms(labs, m, props, consts):
    out = {}
    for i, p in enumerate(props):
        out[(PROP, p)] = np.array([[sum(((lab[x][0] >> i) & 1) << x for x in range(m))] for lab in labs], dtype=np.uint16)
    for i, c in enumerate(consts):
        out[(NOM, c)] = np.array([[sum(((lab[x][1] >> i) & 1) << x for x in range(m))] for lab in labs], dtype=np.uint16)
    return out


def _search(nodes, m, props, rels, consts):
    pop = np.array([bin(i).count("1") for i in range(1 << m)], dtype=np.uint8)
    total = 1 << (m * m)
    labs_all = list(_labelings(m, len(props), consts))
    chunk = max(1, min(total, _BATCH // max(1, len(labs_all))))
    lab_step = max(1, _BATCH // chunk)
    for li in range(0, len(labs_all), lab_step):
        labs = labs_all[li:li + lab_step]
        atoms = _atoms(labs, m, props, consts)
        if not rels:
            hit = np.broadcast_to(_evaluate(nodes, m, atoms, {}, pop) & 1, (len(labs), 1))
            idx = np.flatnonzero(hit[:, 0])
            if idx.size:
                return labs[idx[0]], {}
            continue
        for rest in product(range(total), repeat=len(rels) - 1):
            nbrs = {}
            for r, code in zip(rels[1:], rest):
                rr, cc = _rows_cols(np.array([[code]], dtype=np.int64), m)
                nbrs[r] = (rr, cc)
            for start in range(0, total, chunk):
                codes = np.arange(start, min(total, start + chunk), dtype=np.int64)[None, :]
                nbrs[rels[0]] = _rows_cols(codes, m)
                hit = _evaluate(nodes, m, atoms, nbrs, pop) & 1
                hit = np.broadcast_to(hit, (len(labs), codes.shape[1]))
                where = np.argwhere(hit)
                if where.size:
                    a, b = where[0]
                    return labs[a], dict(zip(rels, (int(codes[0, b]),) + tuple(rest)))
    return None


def _to_structure(m, props, rels, consts, labeling, codes):
    P = {p: [x for x in range(m) if (labeling[x][0] >> i) & 1] for i, p in enumerate(props)}
    C = {c: next(x for x in range(m) if (labeling[x][1] >> i) & 1) for i, c in enumerate(consts)}
    R = {r: [(x, y) for x in range(m) for y in range(m) if (codes[r] >> (x * m + y)) & 1] for r in rels}
    return Structure([f"e{x}" for x in range(m)], P, R, C)
