import random

import pytest
from hypothesis import given, settings

from conftest import greatest_bisimulation_naive, rnd_formula, rnd_structure, structures
from gradsep.bisim import (
    BisimRelation, UnknownConstant, are_bisimilar, greatest_bisimulation, verify_bisimulation,
)
from gradsep.formula import ClosureIndex, Fragment, Signature
from gradsep.semantics import Structure, model_check

SIG = Signature({"A", "B"}, {"R"})
FRAGS = [Fragment.parse(n) for n in ("ML", "GML", "ML^i", "GML^i", "ML^u", "GML^{i,u}")]


class TestGreatest:
    @settings(max_examples=120, deadline=None)
    @given(structures(max_n=4))
    def test_identity_included(self, A):
        for F in FRAGS:
            Z = greatest_bisimulation(A, A, SIG, F)
            assert all((a, a) in Z for a in A.domain)

    @pytest.mark.parametrize("F", FRAGS, ids=lambda F: F.name)
    def test_matches_naive_oracle(self, F):
        r = random.Random(hash(F.name) & 0xffff)
        for _ in range(60):
            A = rnd_structure(r, r.randint(1, 3))
            B = rnd_structure(r, r.randint(1, 3))
            got = greatest_bisimulation(A, B, SIG, F).pairs
            # the graded flag is ignored: the oracle runs on the counting-free fragment
            want = greatest_bisimulation_naive(A, B, SIG, F.counting_free())
            assert got == want, (A.to_dict(), B.to_dict())

    @settings(max_examples=80, deadline=None)
    @given(structures(max_n=4), structures(max_n=4))
    def test_output_verifies(self, A, B):
        for F in FRAGS:
            Z = greatest_bisimulation(A, B, SIG, F)
            if Z.pairs:
                assert verify_bisimulation(Z, A, B)
            else:
                assert not greatest_bisimulation_naive(A, B, SIG, F)

    def test_graded_flag_ignored(self):
        one = Structure(2, {"A": [1]}, {"R": [(0, 1)]})
        two = Structure(3, {"A": [1, 2]}, {"R": [(0, 1), (0, 2)]})
        assert are_bisimilar(one, 0, two, 0, SIG, Fragment.parse("ML"))
        assert are_bisimilar(one, 0, two, 0, SIG, Fragment.parse("GML"))

    def test_global_condition_empties_result(self):
        A = Structure(2, {"A": [1]})
        B = Structure(1)
        assert greatest_bisimulation(A, B, SIG, Fragment.parse("ML")).pairs == {(0, 0)}
        assert not greatest_bisimulation(A, B, SIG, Fragment.parse("ML^u")).pairs

    def test_monotone_in_signature_and_fragment(self):
        r = random.Random(5)
        small = Signature({"A"}, {"R"})
        for _ in range(50):
            A, B = rnd_structure(r, r.randint(1, 4)), rnd_structure(r, r.randint(1, 4))
            big = greatest_bisimulation(A, B, small, Fragment.parse("ML")).pairs
            assert greatest_bisimulation(A, B, SIG, Fragment.parse("ML")).pairs <= big
            assert greatest_bisimulation(A, B, small, Fragment.parse("ML^{i,u}")).pairs <= big

    def test_inverse_sees_predecessors(self):
        A = Structure(2, {}, {"R": [(0, 1)]})
        B = Structure(1, {}, {"R": []})
        assert are_bisimilar(A, 1, B, 0, SIG, Fragment.parse("ML"))
        assert not are_bisimilar(A, 1, B, 0, SIG, Fragment.parse("ML^i"))

    def test_self_and_atoms(self):
        A = Structure(1, {"A": [0]})
        B = Structure(1)
        assert are_bisimilar(A, 0, A, 0, SIG, Fragment.parse("GML^{i,u}"))
        assert not are_bisimilar(A, 0, B, 0, SIG, Fragment.parse("ML"))
        assert are_bisimilar(A, 0, B, 0, Signature((), {"R"}), Fragment.parse("ML"))


class TestForwardPreservation:
    """Related points agree on every formula of the fragment over the signature."""

    def test_random(self):
        r = random.Random(11)
        for _ in range(40):
            A, B = rnd_structure(r, r.randint(1, 4)), rnd_structure(r, r.randint(1, 4))
            F = r.choice([Fragment.parse("ML"), Fragment.parse("ML^i"), Fragment.parse("ML^u")])
            Z = greatest_bisimulation(A, B, SIG, F)
            fs = [rnd_formula(r, 3, kmax=1, u=F.universal, inv=F.inverse) for _ in range(5)]
            C = ClosureIndex(*fs)
            for a, b in Z:
                for f in C.base:
                    assert model_check(A, a, f) == model_check(B, b, f)

    def test_graded_fragment_name(self):
        r = random.Random(12)
        F = Fragment.parse("GML^i")  # bisimilar points agree on counting-free formulas only
        for _ in range(40):
            A, B = rnd_structure(r, r.randint(1, 4)), rnd_structure(r, r.randint(1, 4))
            Z = greatest_bisimulation(A, B, SIG, F)
            C = ClosureIndex(*[rnd_formula(r, 3, kmax=1, inv=True) for _ in range(5)])
            for a, b in Z:
                for f in C.base:
                    assert model_check(A, a, f) == model_check(B, b, f)


class TestVerify:
    def test_nominal_identity(self):
        A = Structure(2, {}, {"R": [(0, 1)]}, {"c": 1})
        sig = Signature((), {"R"}, {"c"})
        F = Fragment.parse("ML^n")
        Z = BisimRelation(frozenset((a, a) for a in A.domain), F, sig)
        assert verify_bisimulation(Z, A, A)

    def test_names_the_failing_condition(self):
        A = Structure(2, {}, {"R": [(0, 1)]})
        B = Structure(1, {}, {"R": []})
        Z = BisimRelation(frozenset({(0, 0)}), Fragment.parse("ML"), Signature((), {"R"}))
        v = verify_bisimulation(Z, A, B)
        assert not v and v.pair == (0, 0) and v.condition

    def test_nominal_mismatch(self):
        A = Structure(2, {}, {}, {"c": 0})
        sig = Signature((), (), {"c"})
        Z = BisimRelation(frozenset({(0, 1)}), Fragment.parse("ML^n"), sig)
        assert not verify_bisimulation(Z, A, A)

    def test_missing_constant(self):
        A = Structure(1, {}, {}, {"c": 0})
        B = Structure(1)
        with pytest.raises(UnknownConstant):
            greatest_bisimulation(A, B, Signature((), (), {"c"}), Fragment.parse("ML^n"))

    def test_check_pairs_subset(self):
        A = Structure(2, {}, {"R": [(0, 1)]})
        B = Structure(2, {}, {"R": [(0, 1)]})
        Z = BisimRelation(frozenset({(0, 0), (1, 1), (1, 0)}), Fragment.parse("ML"), Signature((), {"R"}))
        assert not verify_bisimulation(Z, A, B)
        assert verify_bisimulation(Z, A, B, check_pairs=[(0, 0)])
