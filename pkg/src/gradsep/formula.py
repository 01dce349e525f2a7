"""Graded modal formulas: interned kernel AST, parser, printer, closures.

The kernel has seven node kinds::

    top | prop(A) | nom(c) | not(f) | and(f, g) | dia(R, inv, k, f) | udia(f)

Everything else (disjunction, boxes, ``<=k``/``=k`` grades, the universal
box) is rewritten into the kernel at construction time.  Nodes are interned,
so structurally equal subformulas are the same Python object and identity
comparison is structural equality.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "Formula", "Signature", "Fragment", "ClosureIndex", "ParseError", "GradeZero",
    "top", "bottom", "prop", "nom", "neg", "conj", "disj", "implies", "iff",
    "dia", "box", "dia_eq", "dia_le", "udia", "uall", "big_and", "big_or",
    "parse_formula", "to_text", "signature_of", "shared_signature", "closure",
    "modal_depth", "max_grade", "fragment_check", "subformulas", "fresh_name",
    "conjuncts", "FULL", "ML", "GML",
]

TOP, PROP, NOM, NOT, AND, DIA, UDIA = "top", "prop", "nom", "not", "and", "dia", "udia"

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
RESERVED = frozenset({"true", "false", "dia", "box"})


class ParseError(ValueError):
    def __init__(self, msg, pos=None):
        self.pos = pos
        super().__init__(msg if pos is None else f"{msg} at position {pos}")


class GradeZero(ParseError):
    pass


class Formula:
    """One interned node.  Never build these directly, use the helpers."""

    __slots__ = ("kind", "name", "rel", "inv", "k", "args", "uid", "__weakref__")

    def __repr__(self):
        return f"Formula({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    # identity semantics are inherited from object: interning makes them structural

    def __reduce__(self):
        # pickling goes through text so the interner stays the single source of nodes
        return (parse_formula, (to_text(self),))

    @property
    def child(self):
        return self.args[0]


_table: dict = {}
_lock = threading.Lock()
_counter = [0]


def _mk(kind, name=None, rel=None, inv=False, k=0, args=()):
    key = (kind, name, rel, inv, k, args)
    node = _table.get(key)
    if node is not None:
        return node
    with _lock:
        node = _table.get(key)
        if node is None:
            node = object.__new__(Formula)
            node.kind, node.name, node.rel, node.inv, node.k, node.args = kind, name, rel, inv, k, args
            node.uid = _counter[0]
            _counter[0] += 1
            _table[key] = node
    return node


def _check_name(name: str, what: str):
    if not isinstance(name, str) or not _IDENT.match(name) or name in RESERVED:
        raise ValueError(f"bad {what} name {name!r}")


def top() -> Formula:
    return _mk(TOP)


def prop(name: str) -> Formula:
    _check_name(name, "proposition")
    return _mk(PROP, name=name)


def nom(name: str) -> Formula:
    _check_name(name, "constant")
    return _mk(NOM, name=name)


def neg(f: Formula) -> Formula:
    if f.kind == NOT:
        return f.args[0]
    return _mk(NOT, args=(f,))


def bottom() -> Formula:
    return neg(top())


def conj(f: Formula, g: Formula) -> Formula:
    return _mk(AND, args=(f, g))


def disj(f: Formula, g: Formula) -> Formula:
    return neg(conj(neg(f), neg(g)))


def implies(f: Formula, g: Formula) -> Formula:
    return neg(conj(f, neg(g)))


def iff(f: Formula, g: Formula) -> Formula:
    return conj(implies(f, g), implies(g, f))


def dia(rel: str, f: Formula, k: int = 1, inv: bool = False) -> Formula:
    _check_name(rel, "relation")
    if int(k) < 1:
        raise GradeZero(f"grade must be at least 1, got {k}")
    return _mk(DIA, rel=rel, inv=bool(inv), k=int(k), args=(f,))


def box(rel: str, f: Formula, inv: bool = False) -> Formula:
    return neg(dia(rel, neg(f), 1, inv))


def dia_le(rel: str, f: Formula, k: int, inv: bool = False) -> Formula:
    """At most k successors satisfy f."""
    return neg(dia(rel, f, k + 1, inv))


def dia_eq(rel: str, f: Formula, k: int, inv: bool = False) -> Formula:
    if k == 0:
        return neg(dia(rel, f, 1, inv))
    return conj(dia(rel, f, k, inv), neg(dia(rel, f, k + 1, inv)))


def udia(f: Formula) -> Formula:
    return _mk(UDIA, args=(f,))


def uall(f: Formula) -> Formula:
    return neg(udia(neg(f)))


def big_and(fs: Iterable[Formula]) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else conj(out, f)
    return top() if out is None else out


def big_or(fs: Iterable[Formula]) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else disj(out, f)
    return bottom() if out is None else out


def conjuncts(f: Formula) -> list:
    """Flatten a left/right nested conjunction into its leaves."""
    if f.kind != AND:
        return [f]
    return conjuncts(f.args[0]) + conjuncts(f.args[1])


def subformulas(*fs: Formula) -> list:
    """Distinct subformulas in post-order (children first)."""
    seen = set()
    out = []
    stack = [(f, False) for f in reversed(fs)]
    while stack:
        f, done = stack.pop()
        if done:
            if f not in seen:
                seen.add(f)
                out.append(f)
            continue
        if f in seen:
            continue
        stack.append((f, True))
        for a in reversed(f.args):
            if a not in seen:
                stack.append((a, False))
    return out


# ---------------------------------------------------------------------------
# signatures and fragments

@dataclass(frozen=True)
class Signature:
    props: frozenset = frozenset()
    rels: frozenset = frozenset()
    consts: frozenset = frozenset()

    def __post_init__(self):
        for field in ("props", "rels", "consts"):
            object.__setattr__(self, field, frozenset(getattr(self, field)))
        if (self.props & self.rels) or (self.props & self.consts) or (self.rels & self.consts):
            raise ValueError("signature name sets must be pairwise disjoint")

    def __or__(self, other):
        return Signature(self.props | other.props, self.rels | other.rels, self.consts | other.consts)

    def __and__(self, other):
        return Signature(self.props & other.props, self.rels & other.rels, self.consts & other.consts)

    def __le__(self, other):
        return self.props <= other.props and self.rels <= other.rels and self.consts <= other.consts

    def names(self):
        return self.props | self.rels | self.consts

    @classmethod
    def parse(cls, text: str) -> "Signature":
        """``props=A,B;rels=R;consts=c`` (any part may be omitted)."""
        parts = {"props": set(), "rels": set(), "consts": set()}
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            key, _, vals = chunk.partition("=")
            key = key.strip()
            if key not in parts:
                raise ValueError(f"unknown signature part {key!r}")
            parts[key].update(v.strip() for v in vals.split(",") if v.strip())
        return cls(**parts)

    def __str__(self):
        return ";".join(f"{k}={','.join(sorted(getattr(self, k)))}" for k in ("props", "rels", "consts"))


_FRAG_RE = re.compile(r"^(G?ML)(?:\^?\{?([inu,\s]*)\}?)?$")


@dataclass(frozen=True)
class Fragment:
    graded: bool = False
    inverse: bool = False
    nominals: bool = False
    universal: bool = False

    @classmethod
    def parse(cls, name: str) -> "Fragment":
        m = _FRAG_RE.match(name.strip())
        if not m:
            raise ValueError(f"unknown fragment {name!r}")
        ext = (m.group(2) or "").replace(",", "").replace(" ", "")
        if len(set(ext)) != len(ext):
            raise ValueError(f"repeated extension in {name!r}")
        return cls(m.group(1) == "GML", "i" in ext, "n" in ext, "u" in ext)

    @property
    def name(self) -> str:
        ext = [c for c, on in zip("inu", (self.inverse, self.nominals, self.universal)) if on]
        base = "GML" if self.graded else "ML"
        if not ext:
            return base
        if len(ext) == 1:
            return f"{base}^{ext[0]}"
        return base + "^{" + ",".join(ext) + "}"

    def __str__(self):
        return self.name

    def counting_free(self) -> "Fragment":
        return Fragment(False, self.inverse, self.nominals, self.universal)

    def __le__(self, other):
        return all(not a or b for a, b in zip(self._flags(), other._flags()))

    def _flags(self):
        return (self.graded, self.inverse, self.nominals, self.universal)


FULL = Fragment(True, True, True, True)
ML = Fragment()
GML = Fragment(graded=True)


def signature_of(f: Formula) -> Signature:
    props, rels, consts = set(), set(), set()
    for s in subformulas(f):
        if s.kind == PROP:
            props.add(s.name)
        elif s.kind == NOM:
            consts.add(s.name)
        elif s.kind == DIA:
            rels.add(s.rel)
    return Signature(props, rels, consts)


def shared_signature(f: Formula, g: Formula) -> Signature:
    return signature_of(f) & signature_of(g)


def modal_depth(f: Formula) -> int:
    depth = {}
    for s in subformulas(f):
        inner = max((depth[a] for a in s.args), default=0)
        depth[s] = inner + 1 if s.kind in (DIA, UDIA) else inner
    return depth[f]


def max_grade(f: Formula) -> int:
    return max((s.k for s in subformulas(f) if s.kind == DIA), default=0)


def fragment_check(f: Formula, frag: Fragment) -> bool:
    for s in subformulas(f):
        if s.kind == DIA:
            if s.k > 1 and not frag.graded:
                return False
            if s.inv and not frag.inverse:
                return False
        elif s.kind == NOM and not frag.nominals:
            return False
        elif s.kind == UDIA and not frag.universal:
            return False
    return True


def uses(f: Formula) -> Fragment:
    """Smallest fragment containing f."""
    g = i = n = u = False
    for s in subformulas(f):
        if s.kind == DIA:
            g |= s.k > 1
            i |= s.inv
        n |= s.kind == NOM
        u |= s.kind == UDIA
    return Fragment(g, i, n, u)


def fresh_name(base: str, taken) -> str:
    if base not in taken:
        return base
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


# ---------------------------------------------------------------------------
# closure

class ClosureIndex:
    """sub(f1, ..., fn) closed under single negation.

    ``base`` lists the non-negated members (always including top) in
    post-order; member ``2*i`` is ``base[i]`` and ``2*i + 1`` its negation.
    A type is an int bitmask over ``base``.
    """

    def __init__(self, *fs: Formula):
        self.roots = fs
        base = [top()]
        for s in subformulas(*fs):
            if s.kind != NOT and s is not base[0]:
                base.append(s)
        self.base = base
        self.pos = {b: i for i, b in enumerate(base)}
        self.members = [m for b in base for m in (b, neg(b))]
        self.index = {m: i for i, m in enumerate(self.members)}

    def __len__(self):
        return len(self.members)

    def __contains__(self, f):
        return f in self.index

    def partner(self, i: int) -> int:
        return i ^ 1

    def bit(self, f: Formula) -> int:
        return self.pos[f]

    def holds(self, t: int, f: Formula) -> bool:
        if f.kind == NOT:
            return not (t >> self.pos[f.args[0]]) & 1
        return bool((t >> self.pos[f]) & 1)

    def formulas(self, t: int) -> list:
        """Explicit member list of a type."""
        return [b if (t >> i) & 1 else neg(b) for i, b in enumerate(self.base)]

    def of_kind(self, kind):
        return [b for b in self.base if b.kind == kind]


def closure(f1: Formula, f2: Formula | None = None) -> ClosureIndex:
    return ClosureIndex(f1) if f2 is None else ClosureIndex(f1, f2)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><->|->|>=|<=|[~&|()\[\]@=>\-<!]))")


def _tokenize(text: str):
    out = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("eof", "", n))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, off=0):
        return self.toks[min(self.i + off, len(self.toks) - 1)]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t[1] != val or t[0] == "eof":
            raise ParseError(f"expected {val!r}, got {t[1] or 'end of input'!r}", t[2])
        return t

    def starts_formula(self, tok):
        kind, val, _ = tok
        return kind in ("id",) or val in ("~", "(", "@", "!")

    def parse(self):
        f = self.bicond()
        t = self.peek()
        if t[0] != "eof":
            raise ParseError(f"unexpected {t[1]!r}", t[2])
        return f

    def bicond(self):
        left = self.imp()
        if self.peek()[1] == "<->":
            self.take()
            return iff(left, self.bicond())
        return left

    def imp(self):
        left = self.disj()
        if self.peek()[1] == "->":
            self.take()
            return implies(left, self.imp())
        return left

    def disj(self):
        f = self.conj()
        while self.peek()[1] == "|":
            self.take()
            f = disj(f, self.conj())
        return f

    def conj(self):
        f = self.unary()
        while self.peek()[1] == "&":
            self.take()
            f = conj(f, self.unary())
        return f

    def unary(self):
        kind, val, pos = self.take()
        if val in ("~", "!") and kind == "op":
            return neg(self.unary())
        if val == "(":
            f = self.bicond()
            self.expect(")")
            return f
        if val == "@":
            k2, name, p2 = self.take()
            if k2 != "id":
                raise ParseError("expected constant name after '@'", p2)
            return self._named(nom, name, p2)
        if kind == "id":
            if val == "true":
                return top()
            if val == "false":
                return bottom()
            if val in ("dia", "box"):
                return self.modal(val, pos)
            if val in ("E", "A") and self.starts_formula(self.peek()):
                body = self.unary()
                return udia(body) if val == "E" else uall(body)
            return self._named(prop, val, pos)
        if kind == "eof":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected {val!r}", pos)

    def _named(self, ctor, name, pos):
        try:
            return ctor(name)
        except ValueError as e:
            raise ParseError(str(e), pos) from None

    def modal(self, which, pos):
        cmp, k = ">=", 1
        t = self.peek()
        if t[1] in (">=", "<=", "=", ">"):
            self.take()
            cmp = t[1]
            kt = self.take()
            if kt[0] != "num":
                raise ParseError("expected grade", kt[2])
            k = int(kt[1])
        elif t[1] == "<":
            raise ParseError("unknown operator '<'", t[2])
        elif t[1] != "[":
            raise ParseError(f"unknown operator {t[1]!r}", t[2])
        self.expect("[")
        rt = self.take()
        if rt[0] != "id":
            raise ParseError("expected relation name", rt[2])
        inv = False
        if self.peek()[1] == "-":
            self.take()
            inv = True
        self.expect("]")
        rel = rt[1]
        if rel in RESERVED:
            raise ParseError(f"bad relation name {rel!r}", rt[2])
        body = self.unary()
        if cmp == ">=" and k == 0:
            raise GradeZero("grade 0 in a diamond", pos)
        if which == "box":
            body = neg(body)
        if cmp == ">=":
            f = dia(rel, body, k, inv)
        elif cmp == ">":
            f = dia(rel, body, k + 1, inv)
        elif cmp == "<=":
            f = dia_le(rel, body, k, inv)
        else:
            f = dia_eq(rel, body, k, inv)
        return neg(f) if which == "box" else f


def parse_formula(text: str) -> Formula:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printer

_IMP, _OR, _AND, _UN = 0, 1, 2, 3


def _modal_prefix(f: Formula, word="dia") -> str:
    grade = "" if f.k == 1 else f">={f.k}"
    return f"{word}{grade}[{f.rel}{'-' if f.inv else ''}]"


def _show(f: Formula, memo) -> tuple:
    got = memo.get(f)
    if got is not None:
        return got
    k = f.kind
    if k == TOP:
        out = ("true", _UN)
    elif k == PROP:
        out = (f.name, _UN)
    elif k == NOM:
        out = ("@" + f.name, _UN)
    elif k == AND:
        a, b = f.args
        out = (_wrap(a, _AND, memo) + " & " + _wrap(b, _AND + 1, memo), _AND)
    elif k == DIA:
        out = (_modal_prefix(f) + " " + _wrap(f.args[0], _UN, memo), _UN)
    elif k == UDIA:
        out = ("E " + _wrap(f.args[0], _UN, memo), _UN)
    else:
        out = _show_not(f.args[0], memo)
    memo[f] = out
    return out


def _show_not(g: Formula, memo) -> tuple:
    if g.kind == TOP:
        return ("false", _UN)
    if g.kind == DIA and g.k == 1 and g.args[0].kind == NOT:
        return (_modal_prefix(g, "box") + " " + _wrap(g.args[0].args[0], _UN, memo), _UN)
    if g.kind == UDIA and g.args[0].kind == NOT:
        return ("A " + _wrap(g.args[0].args[0], _UN, memo), _UN)
    if g.kind == AND:
        p, q = g.args
        if _orish(p, q) or (p.kind == NOT and not _sugared(q)):
            return (_wrap(neg(p), _OR, memo) + " | " + _wrap(neg(q), _OR + 1, memo), _OR)
        if q.kind == NOT or _sugared(q):
            return (_wrap(p, _IMP + 1, memo) + " -> " + _wrap(neg(q), _IMP, memo), _IMP)
    return ("~" + _wrap(g, _UN, memo), _UN)


def _orish(p, q):
    # ~(p & q) reads naturally as a disjunction
    return q.kind == NOT and (p.kind == NOT or (p.kind == AND and _orish(*p.args)))


def _sugared(g):
    # the negation of g prints as | or ->
    if g.kind != AND:
        return False
    p, q = g.args
    return q.kind == NOT or p.kind == NOT or _sugared(q)


def _wrap(f, level, memo):
    s, lv = _show(f, memo)
    return s if lv >= level else f"({s})"


def to_text(f: Formula) -> str:
    return _show(f, {})[0]


def iter_nodes(f: Formula) -> Iterator[Formula]:
    return iter(subformulas(f))


def rename(f: Formula, props=None, rels=None, consts=None) -> Formula:
    """Rename symbols; names missing from a map are kept."""
    props, rels, consts = props or {}, rels or {}, consts or {}
    memo = {}
    for s in subformulas(f):
        k = s.kind
        if k == PROP:
            out = prop(props.get(s.name, s.name))
        elif k == NOM:
            out = nom(consts.get(s.name, s.name))
        elif k == TOP:
            out = s
        elif k == NOT:
            out = neg(memo[s.args[0]])
        elif k == AND:
            out = conj(memo[s.args[0]], memo[s.args[1]])
        elif k == DIA:
            out = dia(rels.get(s.rel, s.rel), memo[s.args[0]], s.k, s.inv)
        else:
            out = udia(memo[s.args[0]])
        memo[s] = out
    return memo[f]
