"""Two-register machine encodings: the state-chain formula, the register
formula, finite prefixes of their intended models, and the spy-point rewrite.

Machines are written one instruction per line::

    0: -(0,q1,q1)
    1: +(0,q4)

``+(l,qj)`` increments register l and moves to qj; ``-(l,qj,qk)`` moves to qj
when register l is zero and otherwise decrements it and moves to qk.  The
final state is q_m where m is the number of instructions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .bisim import BisimRelation
from .formula import (
    AND, DIA, NOM, NOT, PROP, TOP, UDIA, Formula, Fragment, Signature,
    big_and, big_or, box, conj, dia, dia_eq, implies, modal_depth, neg, nom,
    prop, signature_of, top, uall, bottom,
)
from .semantics import Structure, model_check

__all__ = [
    "Inc", "Dec", "MinskyMachine", "MalformedMachine", "HaltsWithinDepth", "UNotFresh",
    "LocalCheck", "Prefix", "EXAMPLE_MACHINE", "phi_conjuncts", "psi_conjuncts",
    "encode_phi", "encode_psi", "shared_signature_2rm", "intended_prefix",
    "depth_local_checks", "local_failures", "spypoint_transform", "spy_conjuncts", "spy_augment",
]


class MalformedMachine(ValueError):
    pass


class HaltsWithinDepth(RuntimeError):
    pass


class UNotFresh(ValueError):
    pass


@dataclass(frozen=True)
class Inc:
    reg: int
    next: int

    def __str__(self):
        return f"+({self.reg},q{self.next})"


@dataclass(frozen=True)
class Dec:
    reg: int
    if_zero: int
    if_pos: int

    def __str__(self):
        return f"-({self.reg},q{self.if_zero},q{self.if_pos})"


_LINE = re.compile(r"^\s*(\d+)\s*:\s*([+-])\s*\(\s*([01])\s*,\s*q(\d+)\s*(?:,\s*q(\d+)\s*)?\)\s*$")


@dataclass(frozen=True)
class MinskyMachine:
    instructions: tuple

    def __post_init__(self):
        ins = tuple(self.instructions)
        object.__setattr__(self, "instructions", ins)
        m = len(ins)
        if m == 0:
            raise MalformedMachine("a machine needs at least one instruction")
        if not isinstance(ins[0], Dec):
            raise MalformedMachine("I0 must be a decrement instruction")
        for i, I in enumerate(ins):
            if I.reg not in (0, 1):
                raise MalformedMachine(f"I{i}: register must be 0 or 1")
            for j in self.targets(I):
                if not 0 <= j <= m:
                    raise MalformedMachine(f"I{i}: target q{j} outside q0..q{m}")
                if j == 0:
                    raise MalformedMachine(f"I{i}: q0 may only occur initially")

    @staticmethod
    def targets(I):
        return (I.next,) if isinstance(I, Inc) else (I.if_zero, I.if_pos)

    @property
    def m(self) -> int:
        """Index of the final state."""
        return len(self.instructions)

    @classmethod
    def parse(cls, text: str) -> "MinskyMachine":
        found = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            mt = _LINE.match(line)
            if not mt:
                raise MalformedMachine(f"line {n}: cannot read {line!r}")
            i, sign, reg, a, b = mt.groups()
            i, reg, a = int(i), int(reg), int(a)
            if i in found:
                raise MalformedMachine(f"line {n}: I{i} given twice")
            if sign == "+":
                if b is not None:
                    raise MalformedMachine(f"line {n}: increment takes one target")
                found[i] = Inc(reg, a)
            else:
                if b is None:
                    raise MalformedMachine(f"line {n}: decrement takes two targets")
                found[i] = Dec(reg, a, int(b))
        if sorted(found) != list(range(len(found))):
            raise MalformedMachine("instructions must be numbered 0..m-1 without gaps")
        return cls(tuple(found[i] for i in range(len(found))))

    def to_text(self) -> str:
        return "".join(f"{i}: {I}\n" for i, I in enumerate(self.instructions))

    def run(self, steps: int):
        """Configurations (state, reg0, reg1) for t = 0..steps, stopping at q_m."""
        state, regs = 0, [0, 0]
        out = [(state, 0, 0)]
        for _ in range(steps):
            if state == self.m:
                break
            I = self.instructions[state]
            if isinstance(I, Inc):
                regs[I.reg] += 1
                state = I.next
            elif regs[I.reg] == 0:
                state = I.if_zero
            else:
                regs[I.reg] -= 1
                state = I.if_pos
            out.append((state, regs[0], regs[1]))
        return out


# I2 and I3 complete the three instructions used as the running illustration;
# the run never reaches q5 (it settles in q2 with both registers empty).
EXAMPLE_MACHINE = MinskyMachine((
    Dec(0, 1, 1), Inc(0, 4), Dec(1, 2, 2), Dec(1, 5, 5), Dec(0, 2, 4),
))


# ---------------------------------------------------------------------------
# formulas

def _q(i):
    return prop(f"q{i}")


def _r(l):
    return prop("r0") if l == 0 else neg(prop("r0"))


def _e(l):
    return prop(f"e{l}")


def _state_group(M, c):
    m = M.m
    excl = big_and(implies(_q(i), big_and(neg(_q(j)) for j in range(i + 1, m + 1))) for i in range(m + 1))
    return [
        ("start", conj(nom(c), _q(0))),
        ("some-state", uall(big_or(_q(i) for i in range(m + 1)))),
        ("one-state", uall(excl)),
    ]


def phi_conjuncts(M: MinskyMachine, rel: str = "R", c: str = "c"):
    """Named conjuncts of the state-chain formula, in presentation order."""
    R = rel
    out = _state_group(M, c)
    out += [
        ("no-pred", box(R, bottom(), inv=True)),
        ("one-succ", uall(dia_eq(R, top(), 1))),
        ("one-pred", uall(implies(neg(nom(c)), dia_eq(R, top(), 1, inv=True)))),
        ("never-final", uall(neg(_q(M.m)))),
    ]
    for i, I in enumerate(M.instructions):
        if isinstance(I, Inc):
            out.append((f"I{i}", uall(implies(_q(i), box(R, _q(I.next))))))
        else:
            e = _e(I.reg)
            out.append((f"I{i}-zero", uall(implies(conj(_q(i), e), box(R, _q(I.if_zero))))))
            out.append((f"I{i}-pos", uall(implies(conj(_q(i), neg(e)), box(R, _q(I.if_pos))))))
    return out


def psi_conjuncts(M: MinskyMachine, rel: str = "R", c: str = "c"):
    """Named conjuncts of the register formula, in presentation order.

    The register propagation conjunct is guarded by the negated nominal: the
    root has successors in both registers, so an unguarded version would be
    unsatisfiable whichever register the root is counted in.
    """
    R = rel
    N = nom(c)
    u = prop("u")

    def step(k):
        return conj(dia_eq(R, top(), 1), box(R, dia_eq(R, top(), k, inv=True)))

    out = _state_group(M, c)
    out += [
        ("two-succ", dia_eq(R, top(), 2)),
        ("split", conj(dia(R, conj(u, _r(0))), dia(R, conj(u, _r(1))))),
        ("empty", conj(_e(0), _e(1))),
    ]
    for l in (0, 1):
        stay = conj(box(R, _r(l)), box(R, big_or([_r(l), N]), inv=True))
        out.append((f"keep-r{l}", uall(implies(conj(_r(l), neg(N)), stay))))
    out.append(("unique", uall(implies(conj(u, neg(N)), conj(dia_eq(R, u, 1), dia_eq(R, u, 1, inv=True))))))
    for i, I in enumerate(M.instructions):
        l = I.reg
        if isinstance(I, Inc):
            dbl = conj(dia_eq(R, top(), 2), box(R, dia_eq(R, top(), 1, inv=True)))
            out.append((f"I{i}-grow", uall(implies(conj(_q(i), _r(l)), dbl))))
            out.append((f"I{i}-other", uall(implies(conj(_q(i), neg(_r(l))), step(1)))))
        elif i != 0:
            here = conj(_q(i), _r(l))
            out.append((f"I{i}-zero", uall(implies(conj(here, _e(l)), step(1)))))
            out.append((f"I{i}-halve", uall(implies(conj(here, neg(_e(l))), step(2)))))
            out.append((f"I{i}-other", uall(implies(conj(_q(i), neg(_r(l))), step(1)))))
    for l in (0, 1):
        out.append((f"mark-e{l}", uall(implies(conj(_e(l), _r(l)), u))))
    return out


def encode_phi(M: MinskyMachine, rel: str = "R", c: str = "c") -> Formula:
    return big_and(f for _, f in phi_conjuncts(M, rel, c))


def encode_psi(M: MinskyMachine, rel: str = "R", c: str = "c") -> Formula:
    return big_and(f for _, f in psi_conjuncts(M, rel, c))


def shared_signature_2rm(M: MinskyMachine, rel: str = "R", c: str = "c") -> Signature:
    props = {f"q{i}" for i in range(M.m + 1)} | {"e0", "e1"}
    return Signature(props, {rel}, {c})


# ---------------------------------------------------------------------------
# truncated intended models

@dataclass(frozen=True)
class LocalCheck:
    """``formula`` must hold at every element whose depth is in ``depths``."""
    name: str
    formula: Formula
    depths: tuple


def _box_body(f: Formula, box_rel=None):
    """chi if f is the universal box of chi (or box_rel-box of chi), else None."""
    if f.kind != NOT:
        return None
    g = f.args[0]
    if g.kind == UDIA and box_rel is None:
        return neg(g.args[0])
    if g.kind == DIA and box_rel is not None and g.rel == box_rel and not g.inv and g.k == 1:
        return neg(g.args[0])
    return None


def depth_local_checks(conjs, d: int, box_rel=None):
    """Which conjuncts can be evaluated inside a depth-d prefix, and where.

    A boxed conjunct's body is checked at depth t when t plus the body's
    modal depth stays below d; any other conjunct is checked at the root when
    its own modal depth is below d.
    """
    out = []
    for name, f in conjs:
        body = _box_body(f, box_rel)
        if body is None:
            if modal_depth(f) < d:
                out.append(LocalCheck(name, f, (0,)))
            continue
        depths = tuple(range(0, d - modal_depth(body)))
        if depths:
            out.append(LocalCheck(name, body, depths))
    return out


def local_failures(A: Structure, depth, checks):
    """(check name, element label) for every failed local check."""
    bad = []
    for ch in checks:
        for x in range(len(A)):
            if depth[x] in ch.depths and not model_check(A, x, ch.formula):
                bad.append((ch.name, A.labels[x]))
    return bad


@dataclass
class Prefix:
    machine: MinskyMachine
    d: int
    A: Structure
    B: Structure
    depth_a: list
    depth_b: list
    relation: BisimRelation
    phi_checks: list
    psi_checks: list
    trace: list
    populations: list = field(default_factory=list)

    def interior_pairs(self):
        return [(a, b) for a, b in self.relation if self.depth_a[a] < self.d]


def _e_flags(M, conf, t):
    """e0/e1 at step t: both at the root, else 'decrementing an empty register'."""
    if t == 0:
        return (True, True)
    state = conf[0]
    I = M.instructions[state] if state < M.m else None
    return tuple(isinstance(I, Dec) and I.reg == l and conf[1 + l] == 0 for l in (0, 1))


def intended_prefix(M: MinskyMachine, d: int, rel: str = "R", c: str = "c") -> Prefix:
    """Depth-d truncations of the chain model and the register model.

    Register nodes of depth t >= 1 carry r0 or not; their number per register
    is 2 to the register's value at step t.  The root is also marked u, which
    the uniqueness conjunct forces on the predecessor of the depth-1 u nodes.
    """
    if d < 1:
        raise ValueError("depth must be at least 1")
    trace = M.run(d)
    if len(trace) <= d or any(s == M.m for s, _, _ in trace):
        raise HaltsWithinDepth(f"machine reaches q{M.m} within {d} steps")
    flags = [_e_flags(M, conf, t) for t, conf in enumerate(trace)]

    # chain side
    la, pa, ea = [], {}, []
    for t, (s, _, _) in enumerate(trace):
        la.append(f"a{t}")
        pa.setdefault(f"q{s}", []).append(t)
        for l in (0, 1):
            if flags[t][l]:
                pa.setdefault(f"e{l}", []).append(t)
        if t:
            ea.append((t - 1, t))
    A = Structure(la, pa, {rel: ea}, {c: 0})

    # register side: nodes are (depth, register, index), index 0 carries u
    nodes = [(0, None, 0)]
    layer = {0: [1], 1: [2]}
    nodes += [(1, 0, 0), (1, 1, 0)]
    edges = [(0, 1), (0, 2)]
    pops = [(0, 0), (1, 1)]
    for t in range(1, d):
        s = trace[t][0]
        I = M.instructions[s]
        nxt = {}
        for l in (0, 1):
            cur = layer[l]
            kids = []
            if isinstance(I, Inc) and I.reg == l:
                for x in cur:
                    for _ in range(2):
                        kids.append(len(nodes))
                        nodes.append((t + 1, l, len(kids) - 1))
                        edges.append((x, kids[-1]))
            elif isinstance(I, Dec) and I.reg == l and trace[t][1 + l] > 0:
                for j in range(0, len(cur), 2):
                    kids.append(len(nodes))
                    nodes.append((t + 1, l, len(kids) - 1))
                    edges.append((cur[j], kids[-1]))
                    edges.append((cur[j + 1], kids[-1]))
            else:
                for x in cur:
                    kids.append(len(nodes))
                    nodes.append((t + 1, l, len(kids) - 1))
                    edges.append((x, kids[-1]))
            nxt[l] = kids
        layer = nxt
        pops.append((len(nxt[0]), len(nxt[1])))
    lb, pb = [], {}
    depth_b = []
    for x, (t, l, j) in enumerate(nodes):
        lb.append("b0" if t == 0 else f"b{t}.{'r0' if l == 0 else 'r1'}.{j}")
        depth_b.append(t)
        pb.setdefault(f"q{trace[t][0]}", []).append(x)
        for ll in (0, 1):
            if flags[t][ll]:
                pb.setdefault(f"e{ll}", []).append(x)
        if l == 0:
            pb.setdefault("r0", []).append(x)
        if j == 0:
            pb.setdefault("u", []).append(x)
    B = Structure(lb, pb, {rel: edges}, {c: 0})

    sig = shared_signature_2rm(M, rel, c)
    pairs = frozenset((a, b) for a in range(len(A)) for b in range(len(B)) if a == depth_b[b])
    relation = BisimRelation(pairs, Fragment.parse("ML^{i,n,u}"), sig)
    return Prefix(
        M, d, A, B, list(range(len(A))), depth_b, relation,
        depth_local_checks(phi_conjuncts(M, rel, c), d),
        depth_local_checks(psi_conjuncts(M, rel, c), d),
        trace, pops,
    )


# ---------------------------------------------------------------------------
# spy points

def _replace_udia(f: Formula, U: str, memo):
    got = memo.get(f)
    if got is not None:
        return got
    k = f.kind
    if k in (TOP, PROP, NOM):
        out = f
    elif k == NOT:
        out = neg(_replace_udia(f.args[0], U, memo))
    elif k == AND:
        out = conj(_replace_udia(f.args[0], U, memo), _replace_udia(f.args[1], U, memo))
    elif k == DIA:
        out = dia(f.rel, _replace_udia(f.args[0], U, memo), f.k, f.inv)
    elif k == UDIA:
        out = dia(U, _replace_udia(f.args[0], U, memo))
    else:  # pragma: no cover
        raise AssertionError(k)
    memo[f] = out
    return out


def spy_conjuncts(conjs, U: str = "U", c: str = "c"):
    """Named-conjunct version of ``spypoint_transform``."""
    sig = Signature()
    for _, f in conjs:
        sig = sig | signature_of(f)
    if U in sig.names():
        raise UNotFresh(f"relation {U!r} already occurs in the formula")
    back = dia(U, nom(c), inv=True)
    reach = big_and(conj(box(R, back), box(R, back, inv=True)) for R in sorted(sig.rels))
    memo = {}
    out = [(name, _replace_udia(f, U, memo)) for name, f in conjs]
    return out + [("spy-root", dia(U, nom(c))), ("spy-reach", box(U, reach))]


def spypoint_transform(phi: Formula, U: str = "U", c: str = "c") -> Formula:
    """Trade the universal modality for a fresh relation U seen from c.

    Every universal diamond becomes a U-diamond, and two conjuncts keep all
    R-neighbours of U-successors within U-reach of c, for every relation R of
    the input.
    """
    return big_and(f for _, f in spy_conjuncts([("phi", phi)], U, c))


def spy_augment(A: Structure, U: str = "U", c: str = "c") -> Structure:
    """A with U interpreted as edges from c to every element."""
    root = A.consts[c]
    return A.with_extra(rels={U: [(root, x) for x in range(len(A))]})
