import random

import pytest
from hypothesis import given, settings

from conftest import CHAIN_PHI1, formulas, rnd_formula, rnd_structure, structures
from gradsep.definability import flatten
from gradsep.encodings import EXAMPLE_MACHINE, intended_prefix
from gradsep.formula import (
    ClosureIndex, conjuncts, dia, max_grade, modal_depth, neg, parse_formula, prop, top, udia,
)
from gradsep.sat import bounded_model_search
from gradsep.semantics import Structure, UnknownSymbol, model_check, omega_expand, realized_type


def chain(n, props=None):
    return Structure.from_labels([f"a{i}" for i in range(n)], props or {},
                                 {"R": [(f"a{i}", f"a{i + 1}") for i in range(n - 1)]})


def naive_holds(A, a, f):
    """Textbook recursive evaluation, independent of the bitset evaluator."""
    k = f.kind
    if k == "top":
        return True
    if k == "prop":
        return a in A.props.get(f.name, ())
    if k == "nom":
        return A.consts.get(f.name) == a
    if k == "not":
        return not naive_holds(A, a, f.args[0])
    if k == "and":
        return naive_holds(A, a, f.args[0]) and naive_holds(A, a, f.args[1])
    if k == "udia":
        return any(naive_holds(A, b, f.args[0]) for b in A.domain)
    pairs = A.rels.get(f.rel, ())
    nb = [y for x, y in pairs if x == a] if not f.inv else [x for x, y in pairs if y == a]
    return sum(1 for b in nb if naive_holds(A, b, f.args[0])) >= f.k


class TestModelCheck:
    def test_two_chain(self):
        A = chain(2, {"A": ["a1"]})
        assert model_check(A, 0, parse_formula("dia>=1[R] A"))
        assert not model_check(A, 0, parse_formula("dia>=2[R] A"))

    def test_inverse_and_nominal(self):
        A = Structure.from_labels(["x", "y"], {}, {"R": [("x", "y")]}, {"c": "x"})
        assert model_check(A, 1, parse_formula("dia[R-] @c"))
        assert not model_check(A, 0, parse_formula("dia[R-] true"))
        assert model_check(A, 1, parse_formula("E @c & ~@c"))

    def test_unknown_symbols(self):
        A = chain(2)
        with pytest.raises(UnknownSymbol):
            model_check(A, 0, parse_formula("@c"))
        with pytest.raises(UnknownSymbol):
            model_check(A, 0, parse_formula("dia[S] true"))

    @settings(max_examples=200, deadline=None)
    @given(structures(max_n=5, rels=("R", "S")), formulas(depth=3, rels=("R", "S"), kmax=3, u=True, inv=True))
    def test_matches_naive_evaluator(self, A, f):
        for a in A.domain:
            assert model_check(A, a, f) == naive_holds(A, a, f)

    def test_chain_pair_truncated_chain(self):
        # phi1 forces an infinite R-chain: no model with at most 4 elements exists ...
        f1 = parse_formula(CHAIN_PHI1)
        assert not bounded_model_search(f1, 4)
        # ... but on a long chain every boxed body holds away from the cut-off end
        n = 12
        A = chain(n, {"B": ["a0"], "A": [f"a{i}" for i in range(1, n, 2)]})
        assert model_check(A, 0, prop("B"))
        for g in conjuncts(f1):
            if g.kind == "not" and g.args[0].kind == "udia":
                body = neg(g.args[0].args[0])
                for x in range(n - 1 - modal_depth(body)):
                    assert model_check(A, x, body)

    def test_machine_prefix_state_label(self):
        P = intended_prefix(EXAMPLE_MACHINE, 3)
        assert model_check(P.A, P.A.index("a2"), prop("q4"))


class TestTypes:
    def test_reflexive_point(self):
        A = Structure(1, {"A": [0]}, {"R": [(0, 0)]})
        f = dia("R", prop("A"))
        C = ClosureIndex(prop("A"), f)
        t = realized_type(A, 0, C)
        assert set(C.formulas(t)) == {top(), prop("A"), f}

    def test_universal_part_shared(self):
        r = random.Random(3)
        for _ in range(20):
            A = rnd_structure(r, 4)
            C = ClosureIndex(udia(rnd_formula(r, 2)), udia(rnd_formula(r, 2)))
            parts = {realized_type(A, a, C) & sum(1 << C.bit(b) for b in C.of_kind("udia")) for a in A.domain}
            assert len(parts) == 1

    def test_agrees_with_model_check(self):
        r = random.Random(7)
        for _ in range(100):
            A = rnd_structure(r, r.randint(1, 5), rels=("R", "S"))
            f = rnd_formula(r, 3, rels=("R", "S"), kmax=3, u=True, inv=True)
            C = ClosureIndex(f)
            for a in A.domain:
                t = realized_type(A, a, C)
                for b in C.base:
                    assert C.holds(t, b) == model_check(A, a, b)


class TestExpansion:
    def test_single_point(self):
        A = Structure(1, {"A": [0]})
        B = omega_expand(A, 2)
        assert len(B) == 2 and B.props["A"] == {0, 1} and B.edge_count() == 0

    def test_constants_not_copied(self):
        A = Structure.from_labels(["x", "y"], {}, {"R": [("x", "y")]}, {"c": "x"})
        B = omega_expand(A, 3)
        assert len(B) == 4
        assert B.origin[B.consts["c"]] == (0, 0)

    def test_bad_kappa(self):
        with pytest.raises(ValueError):
            omega_expand(Structure(1), 0)

    @settings(max_examples=80, deadline=None)
    @given(structures(max_n=4, rels=("R", "S")), formulas(depth=3, rels=("R", "S"), kmax=1, u=True, inv=True))
    def test_counting_free_invariance(self, A, f):
        B = omega_expand(A, 3)
        for a in A.domain:
            for i in range(3):
                assert model_check(A, a, f) == model_check(B, B.copy_of[(a, i)], f)

    @settings(max_examples=80, deadline=None)
    @given(structures(max_n=4, rels=("R", "S")), formulas(depth=3, rels=("R", "S"), kmax=3, u=True, inv=True))
    def test_flattening_on_expansion(self, A, f):
        B = omega_expand(A, max_grade(f) + 1)
        fl = flatten(f)
        for a in A.domain:
            x = B.copy_of[(a, 0)]
            assert model_check(B, x, f) == model_check(B, x, fl)


class TestIO:
    def test_roundtrip(self, tmp_path):
        A = Structure.from_labels(["x", "y"], {"A": ["y"]}, {"R": [("x", "y")]}, {"c": "y"})
        p = tmp_path / "a.json"
        A.dump(p)
        B = Structure.load(p)
        assert B.to_dict() == A.to_dict()

    @pytest.mark.parametrize("bad", [
        {"elements": []},
        {"elements": ["x", "x"]},
        {"elements": ["x"], "rels": {"R": [["x", "z"]]}},
        {"elements": ["x"], "consts": {"c": "z"}},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            Structure.from_dict(bad)

