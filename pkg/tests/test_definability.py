import pytest
from hypothesis import given, settings

from conftest import formulas
from gradsep.definability import (
    ConstantOutsideScope, ConstantPolicy, HasNominals, flatten, flatten_nominal, is_definable,
    relative_definability_transform, uniform_separator,
)
from gradsep.formula import (
    Fragment, Signature, conj, dia, disj, fragment_check, iff, max_grade, modal_depth, nom, neg, parse_formula, prop,
    signature_of, top,
)
from gradsep.mosaic import decide_separation
from gradsep.sat import entails, is_valid, sat_check

ML = Fragment.parse("ML")
NOMINAL_EX = "dia[R] A & dia[S] A & (dia>=2[R] A <-> dia>=2[S] A)"


def P(s):
    return parse_formula(s)


class TestFlatten:
    def test_examples(self):
        assert flatten(P("dia>=3[R] A")) == P("dia[R] A")
        assert flatten(top()) == top()
        assert flatten(P("dia>=2[R] (A & dia>=5[S] B)")) == P("dia[R] (A & dia[S] B)")

    def test_rejects_nominals(self):
        with pytest.raises(HasNominals):
            flatten(P("@c"))

    def test_nominal_variant(self):
        f = P("dia>=2[R] A")
        assert flatten_nominal(f, ()) == flatten(f)
        want = disj(dia("R", conj(prop("A"), neg(nom("c")))), dia("R", conj(prop("A"), nom("c")), 2))
        assert flatten_nominal(f, ("c",)) == want

    def test_nominal_example_flattening(self):
        assert is_valid(iff(flatten(P(NOMINAL_EX)), P("dia[R] A & dia[S] A")))

    @settings(max_examples=100, deadline=None)
    @given(formulas(depth=3, rels=("R", "S"), kmax=3, u=True, inv=True))
    def test_counting_free_and_weaker(self, f):
        fl = flatten(f)
        assert fragment_check(fl, Fragment.parse("ML^{i,u}"))
        assert max_grade(fl) <= 1 and modal_depth(fl) == modal_depth(f)
        assert flatten(fl) is fl


class TestDefinable:
    @pytest.mark.parametrize("n,want", [(1, "Definable"), (2, "NotDefinable"), (3, "NotDefinable")])
    def test_at_least_n(self, n, want):
        a = is_definable(P(f"dia>={n}[R] p"), ML)
        assert a.kind == want and a.exact
        if n == 1:
            assert a.witness == P("dia[R] p")

    def test_negated_exact(self):
        assert is_definable(P("~(dia>=2[R] p & ~dia>=3[R] p)"), ML).kind == "NotDefinable"

    @settings(max_examples=60, deadline=None)
    @given(formulas(depth=2, kmax=2, u=True))
    def test_witness_is_equivalent(self, f):
        a = is_definable(f, Fragment.parse("ML^u"))
        if a:
            assert fragment_check(a.witness, Fragment.parse("ML^u"))
            assert is_valid(iff(f, a.witness))
        else:
            assert not is_valid(iff(f, flatten(f)))


class TestUniform:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_at_least(self, n):
        a = uniform_separator(P(f"dia>={n}[R] p"), "none", ML)
        assert a.kind == "Exists" and a.witness == P("dia[R] p")

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_exactly(self, n):
        f = P(f"dia>={n}[R] p & ~dia>={n + 1}[R] p")
        assert uniform_separator(f, "none", ML).kind == "NotExists"
        b = uniform_separator(neg(f), "none", ML)
        assert b.kind == "Exists" and b.witness == top()

    def test_nominal_example(self):
        f = P(NOMINAL_EX)
        a = uniform_separator(f, "none", ML)
        assert a.kind == "Exists" and a.witness == P("dia[R] A & dia[S] A")
        b = uniform_separator(f, ConstantPolicy.parse("c1,c2"), Fragment.parse("ML^n"))
        assert b.kind == "NotExists"
        # the nominal flattening is not a consequence: both sides can be satisfied together,
        # yet some model of f refutes it
        assert not entails(f, b.flattening)
        assert sat_check(conj(f, b.flattening))

    def test_separator_is_consequence(self):
        for s in ("dia>=2[R] p & B", "dia>=3[R] (p & dia>=2[S] q)", "~dia>=2[R] p | dia[S] q"):
            a = uniform_separator(P(s), "none", ML)
            if a:
                assert entails(P(s), a.witness)

    def test_constant_scope(self):
        with pytest.raises(ConstantOutsideScope):
            uniform_separator(P("@c & dia>=2[R] p"), "none", Fragment.parse("ML^n"))
        with pytest.raises(ConstantOutsideScope):
            uniform_separator(P("@c & dia>=2[R] p"), "d", Fragment.parse("ML^n"))

    def test_policy_parse(self):
        assert ConstantPolicy.parse("none").kind == "none"
        p = ConstantPolicy.parse("infinite: c, d")
        assert p.kind == "infinite" and p.consts == {"c", "d"}
        assert ConstantPolicy.parse("c").consts == {"c"}


class TestRelative:
    def test_identity_on_rho(self):
        phi, psi = P("dia[R] A"), P("B")
        rho = signature_of(conj(phi, psi))
        a, b = relative_definability_transform(rho, phi, psi)
        assert a == conj(phi, psi) and b == conj(phi, neg(psi))

    def test_fresh_names(self):
        phi, psi = P("dia[R] A & A_r"), P("B")
        a, b = relative_definability_transform(Signature(), phi, psi)
        used = signature_of(conj(phi, psi)).names()
        renamed = signature_of(b).names()
        assert not (renamed & used)

    @pytest.mark.parametrize("phi,valid_neg", [("dia[R] B & ~dia[R] B", True), ("dia[R] B", False)])
    def test_empty_rho(self, phi, valid_neg):
        phi = P(phi)
        a, b = relative_definability_transform(Signature(), phi, prop("A"))
        res = decide_separation(a, b, ML, mode="craig")
        assert res.separable == valid_neg == (not sat_check(phi))
