"""Finite Kripke structures and model checking for GML^{i,n,u}."""
from __future__ import annotations

import json
from pathlib import Path

from .formula import AND, DIA, NOM, NOT, PROP, TOP, UDIA, ClosureIndex, Formula, Signature, subformulas

__all__ = ["Structure", "UnknownSymbol", "model_check", "extension", "realized_type", "omega_expand"]


class UnknownSymbol(KeyError):
    pass


class Structure:
    """Elements are dense ints ``0..n-1``; ``labels[i]`` is the display name.

    Extensions and neighbourhoods are stored as int bitsets, which keeps
    model checking a handful of word operations per element.
    """

    def __init__(self, labels, props=None, rels=None, consts=None):
        if isinstance(labels, int):
            labels = [str(i) for i in range(labels)]
        self.labels = [str(x) for x in labels]
        n = len(self.labels)
        if n == 0:
            raise ValueError("structure domain must be non-empty")
        if len(set(self.labels)) != n:
            raise ValueError("duplicate element labels")
        self.props = {p: frozenset(v) for p, v in (props or {}).items()}
        self.rels = {r: frozenset((int(a), int(b)) for a, b in v) for r, v in (rels or {}).items()}
        self.consts = {c: int(v) for c, v in (consts or {}).items()}
        for p, v in self.props.items():
            if any(not 0 <= x < n for x in v):
                raise ValueError(f"proposition {p} refers to a missing element")
        for r, v in self.rels.items():
            if any(not (0 <= a < n and 0 <= b < n) for a, b in v):
                raise ValueError(f"relation {r} refers to a missing element")
        for c, v in self.consts.items():
            if not 0 <= v < n:
                raise ValueError(f"constant {c} denotes a missing element")
        self._succ = {}
        self._pred = {}
        for r, pairs in self.rels.items():
            s = [0] * n
            p = [0] * n
            for a, b in pairs:
                s[a] |= 1 << b
                p[b] |= 1 << a
            self._succ[r] = s
            self._pred[r] = p
        self._pmask = {p: sum(1 << x for x in v) for p, v in self.props.items()}

    # -- basic accessors
    def __len__(self):
        return len(self.labels)

    @property
    def size(self):
        return len(self.labels)

    @property
    def domain(self):
        return range(len(self.labels))

    @property
    def all_mask(self):
        return (1 << len(self.labels)) - 1

    def signature(self) -> Signature:
        return Signature(self.props, self.rels, self.consts)

    def succ_mask(self, rel, a, inv=False):
        table = (self._pred if inv else self._succ).get(rel)
        if table is None:
            raise UnknownSymbol(f"relation {rel!r} not in structure")
        return table[a]

    def successors(self, rel, a, inv=False):
        m = self.succ_mask(rel, a, inv)
        return [b for b in self.domain if (m >> b) & 1]

    def prop_mask(self, p):
        return self._pmask.get(p, 0)

    def index(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise UnknownSymbol(f"no element labelled {label!r}") from None

    def constant_elements(self):
        return set(self.consts.values())

    def edge_count(self):
        return sum(len(v) for v in self.rels.values())

    # -- io
    @classmethod
    def from_labels(cls, elements, props=None, rels=None, consts=None):
        ix = {str(e): i for i, e in enumerate(elements)}

        def look(x):
            try:
                return ix[str(x)]
            except KeyError:
                raise ValueError(f"unknown element label {x!r}") from None

        return cls(
            list(elements),
            {p: [look(x) for x in v] for p, v in (props or {}).items()},
            {r: [(look(a), look(b)) for a, b in v] for r, v in (rels or {}).items()},
            {c: look(x) for c, x in (consts or {}).items()},
        )

    def to_dict(self) -> dict:
        lab = self.labels
        return {
            "elements": list(lab),
            "props": {p: sorted(lab[x] for x in v) for p, v in sorted(self.props.items())},
            "rels": {r: sorted([lab[a], lab[b]] for a, b in v) for r, v in sorted(self.rels.items())},
            "consts": {c: lab[x] for c, x in sorted(self.consts.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Structure":
        return cls.from_labels(d["elements"], d.get("props"), d.get("rels"), d.get("consts"))

    @classmethod
    def load(cls, path) -> "Structure":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    def __repr__(self):
        return f"Structure({len(self)} elements, rels={sorted(self.rels)}, consts={sorted(self.consts)})"

    def with_extra(self, props=None, rels=None, consts=None) -> "Structure":
        """Copy with additional (or replaced) interpretations."""
        p = dict(self.props)
        p.update(props or {})
        r = dict(self.rels)
        r.update(rels or {})
        c = dict(self.consts)
        c.update(consts or {})
        return Structure(self.labels, p, r, c)


def extension(A: Structure, f: Formula, memo=None) -> int:
    """Bitmask of the elements satisfying f, computed bottom-up."""
    memo = {} if memo is None else memo
    full = A.all_mask
    n = len(A)
    for s in subformulas(f):
        if s in memo:
            continue
        k = s.kind
        if k == TOP:
            v = full
        elif k == PROP:
            v = A.prop_mask(s.name)
        elif k == NOM:
            if s.name not in A.consts:
                raise UnknownSymbol(f"constant {s.name!r} is not denoted")
            v = 1 << A.consts[s.name]
        elif k == NOT:
            v = full & ~memo[s.args[0]]
        elif k == AND:
            v = memo[s.args[0]] & memo[s.args[1]]
        elif k == DIA:
            body = memo[s.args[0]]
            table = (A._pred if s.inv else A._succ).get(s.rel)
            if table is None:
                raise UnknownSymbol(f"relation {s.rel!r} not in structure")
            need = s.k
            v = 0
            for x in range(n):
                if (table[x] & body).bit_count() >= need:
                    v |= 1 << x
        elif k == UDIA:
            v = full if memo[s.args[0]] else 0
        else:  # pragma: no cover
            raise AssertionError(k)
        memo[s] = v
    return memo[f]


def model_check(A: Structure, a: int, f: Formula) -> bool:
    return bool((extension(A, f) >> a) & 1)


def realized_type(A: Structure, a: int, C: ClosureIndex, memo=None) -> int:
    memo = {} if memo is None else memo
    t = 0
    for i, b in enumerate(C.base):
        if (extension(A, b, memo) >> a) & 1:
            t |= 1 << i
    return t


def omega_expand(A: Structure, kappa: int) -> Structure:
    """kappa copies of every element not denoted by a constant.

    The result carries ``origin`` (new id -> (old id, copy)) and ``copy_of``
    (the inverse map).
    """
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    named = A.constant_elements()
    labels, origin, copy_of = [], [], {}
    for a in A.domain:
        for i in range(1 if a in named else kappa):
            copy_of[(a, i)] = len(labels)
            origin.append((a, i))
            labels.append(f"{A.labels[a]}#{i}")
    groups = {a: [copy_of[(a, i)] for i in range(1 if a in named else kappa)] for a in A.domain}
    props = {p: [x for a in v for x in groups[a]] for p, v in A.props.items()}
    rels = {r: [(x, y) for a, b in v for x in groups[a] for y in groups[b]] for r, v in A.rels.items()}
    consts = {c: copy_of[(a, 0)] for c, a in A.consts.items()}
    B = Structure(labels, props, rels, consts)
    B.origin = origin
    B.copy_of = copy_of
    return B
