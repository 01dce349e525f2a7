import random
from itertools import combinations

import pytest

from conftest import rnd_formula
from gradsep.definability import is_definable
from gradsep.formula import Fragment, neg, parse_formula, prop, signature_of
from gradsep.mosaic import (
    BudgetExceeded, Mosaic, SeparationProblem, check_certificate, craig_pad, decide_separation,
    decide_separation_bounded, decide_separation_explicit, eliminate, enumerate_mosaics, find_r_witness,
    verify_witness,
)
from gradsep.sat import UnsupportedFragment

ML = Fragment.parse("ML")
P_ = parse_formula


def random_instances(seed, n, max_closure=12, universal=False):
    r = random.Random(seed)
    out = []
    while len(out) < n:
        f = rnd_formula(r, 2, rels=("R", "S"), kmax=2, u=universal and r.random() < 0.4)
        g = neg(f) if r.random() < 0.5 else rnd_formula(r, 2, rels=("R", "S"), kmax=2)
        mode = r.choice(["plain", "craig"])
        P = SeparationProblem(f, g, ML, mode)
        if len(P.C) > max_closure:
            continue
        out.append((f, g, mode))
    return out


def down_closure(P, maxima, mosaics):
    return {M for M in mosaics if any(M.m1 <= N.m1 and M.m2 <= N.m2 for N in maxima)}


class TestMosaics:
    def test_two_prop_closure_matches_brute(self):
        P = SeparationProblem(prop("A"), prop("B"), ML, "plain")
        types = P.TS.types
        assert len(types) == 4
        brute = set()
        for r1 in range(3):
            for q1 in combinations(types, r1):
                for r2 in range(3):
                    for q2 in combinations(types, r2):
                        if not q1 and not q2:
                            continue
                        if len({P.val(t) for t in q1 + q2}) == 1:
                            brute.add(Mosaic(frozenset(q1), frozenset(q2)))
        assert set(enumerate_mosaics(P)) == brute

    def test_nominal_unique_per_side(self):
        # craig mode: only c is shared, so named types differing on A agree on the signature
        P = SeparationProblem(P_("@c & A"), P_("@c"), Fragment.parse("ML^n"), "craig")
        named = [t for t in P.TS.types if P.TS.is_nominal(t)]
        two = [(s, t) for s, t in combinations(named, 2) if P.val(s) == P.val(t)]
        assert two
        s, t = two[0]
        assert not P.is_mosaic(Mosaic(frozenset({s, t}), frozenset()))
        assert P.is_mosaic(Mosaic(frozenset({s}), frozenset()))

    def test_universal_parts_must_agree(self):
        P = SeparationProblem(P_("E A"), P_("B"), Fragment.parse("ML^u"), "plain")
        TS = P.TS
        by_u = {}
        for t in TS.types:
            by_u.setdefault((P.val(t), TS.udia_part(t)), []).append(t)
        pairs = [(a[0], b[0]) for (v, u), a in by_u.items() for (v2, u2), b in by_u.items() if v == v2 and u != u2]
        s, t = pairs[0]
        assert not P.is_mosaic(Mosaic(frozenset({s, t}), frozenset({s})))

    def test_universal_target_needs_both_sides(self):
        P = SeparationProblem(prop("A"), prop("A"), Fragment.parse("ML^u"), "plain")
        t = P.TS.types[0]
        assert not P.is_mosaic(Mosaic(frozenset({t}), frozenset()))

    def test_budget(self):
        f = P_("dia>=2[R] (A & dia[S] B) & dia[R] (C & ~A)")
        P = SeparationProblem(f, neg(f), ML, "plain")
        with pytest.raises(BudgetExceeded):
            enumerate_mosaics(P, limit=5)


class TestWitness:
    def test_vacuous(self):
        P = SeparationProblem(P_("A & dia[R] true"), P_("B"), ML, "plain")
        t = next(t for t in P.TS.types if not P.TS.holds(t, P_("dia[R] true")))
        M = Mosaic(frozenset({t}), frozenset())
        cert = find_r_witness(P, M, [], "R")
        assert cert is not None and cert.candidates == [] and verify_witness(P, cert)[0]

    def test_missing_target(self):
        P = SeparationProblem(P_("dia[R] A"), P_("B"), ML, "plain")
        t = next(t for t in P.TS.types if P.TS.holds(t, P_("dia[R] A")) and not P.TS.holds(t, prop("A")))
        M = Mosaic(frozenset({t}), frozenset())
        no_a = [N for N in enumerate_mosaics(P) if not any(P.TS.holds(s, prop("A")) for s in N.m1)]
        assert find_r_witness(P, M, no_a, "R") is None

    def test_dropping_an_edge_is_caught(self):
        f = P_("dia>=2[R] p")
        P = SeparationProblem(f, neg(f), ML, "plain")
        res = decide_separation(f, neg(f), ML, "plain")
        for cert in res.certificate["witnesses"].values():
            for e, targets in cert.edges.items():
                if targets:
                    cert.edges[e] = targets[1:]
                    ok, why = verify_witness(P, cert)
                    assert not ok and why in ("witness", "bisim")
                    return
        pytest.fail("no edge to drop")


class TestElimination:
    def test_no_modalities_keeps_everything(self):
        P = SeparationProblem(P_("A & B"), P_("~A"), ML, "plain")
        S0 = enumerate_mosaics(P)
        assert eliminate(P, S0) == S0

    def test_contradictory_types_never_enter(self):
        P = SeparationProblem(P_("A & ~A"), P_("B"), ML, "plain")
        for M in enumerate_mosaics(P):
            assert not any(P.TS.holds(t, P.phi1) for t in M.m1)

    def test_order_independent(self):
        done = 0
        for f, g, mode in random_instances(3, 25):
            P = SeparationProblem(f, g, ML, mode)
            P.budget = 3000
            try:
                S0 = enumerate_mosaics(P, 400)
                a = set(eliminate(P, S0))
            except BudgetExceeded:
                continue
            assert a == set(eliminate(P, S0, order="sequential")) == set(eliminate(P, S0, order="reverse"))
            done += 1
        assert done >= 10

    def test_example_survivors_match_exhaustive(self):
        f = P_("dia>=2[R] p")
        P = SeparationProblem(f, neg(f), ML, "plain")
        assert len(P.C) <= 12
        allm = enumerate_mosaics(P)
        res = decide_separation(f, neg(f), ML, "plain")
        assert down_closure(P, res.certificate["survivors"], allm) == set(eliminate(P, allm))


class TestDecide:
    def test_examples(self):
        assert decide_separation(prop("A"), neg(prop("A")), ML, "craig")
        f = P_("dia>=2[R] p")
        res = decide_separation(f, neg(f), ML, "plain")
        assert not res and res.exact
        assert decide_separation(P_("dia>=1[R] p"), P_("~dia>=1[R] p"), ML, "plain")

    def test_bounded_mirrors(self):
        pairs = [(prop("A"), neg(prop("A"))), (P_("dia>=2[R] p"), P_("~dia>=2[R] p")),
                 (P_("dia[R] p"), P_("~dia[R] p"))]
        for f, g in pairs:
            a = decide_separation(f, g, ML, "plain")
            b = decide_separation_bounded(f, g, ML, "plain")
            assert a.verdict == b.verdict

    def test_bounded_rejects_universal(self):
        with pytest.raises(UnsupportedFragment):
            decide_separation_bounded(P_("E A"), P_("B"), ML, "plain")
        with pytest.raises(UnsupportedFragment):
            decide_separation(P_("dia[R-] A"), P_("B"), ML)

    def test_agrees_with_explicit_oracle(self):
        done = 0
        for f, g, mode in random_instances(5, 25, universal=True):
            P = SeparationProblem(f, g, ML, mode)
            P.budget = 3000
            try:
                want = decide_separation_explicit(P, 400)
            except BudgetExceeded:
                continue
            got = decide_separation(f, g, ML, mode)
            assert got.exact and got.verdict == want.verdict, (f, g, mode)
            done += 1
        assert done >= 10

    def test_certificates_check(self):
        seen = 0
        for f, g, mode in random_instances(8, 40):
            res = decide_separation(f, g, ML, mode)
            if res.separable:
                continue
            seen += 1
            P = SeparationProblem(f, g, ML, mode)
            assert check_certificate(P, res.certificate) == (True, None)
            m = res.certificate["models"]
            assert m is not None and (m["a1"], m["a2"]) in m["beta"].pairs
        assert seen >= 5

    def test_definability_coherence(self):
        r = random.Random(21)
        for _ in range(20):
            f = rnd_formula(r, 2, rels=("R", "S"), kmax=3)
            a = decide_separation(f, neg(f), ML, "plain")
            assert (not a.separable) == (is_definable(f, ML).kind == "NotDefinable")


class TestPadding:
    def test_disjoint_signatures(self):
        f, g = P_("dia[R] A"), P_("B")
        pf, pg = craig_pad(f, g)
        assert signature_of(pf) == signature_of(pg)
        assert pf is not f and pg is not g
        assert decide_separation(pf, pg, ML, "craig").verdict == decide_separation(f, g, ML, "plain").verdict

    def test_shared_unchanged(self):
        f, g = P_("dia[R] A"), P_("~dia[R] A")
        assert craig_pad(f, g) == (f, g)

    def test_padded_craig_equals_plain(self):
        for f, g, _ in random_instances(13, 20):
            pf, pg = craig_pad(f, g)
            a = decide_separation(pf, pg, ML, "craig")
            b = decide_separation(f, g, ML, "plain")
            assert a.verdict == b.verdict, (f, g)
