import random

import pytest
from hypothesis import given, settings, strategies as st

from framekb import AttributeFact, DiagnosticError, Lit, Oid, evaluate, match_atom, parse_program, parse_query, saturate
from framekb.flogic import AttrAtom, MemberAtom, Query, Var
from framekb.loader import load_program

from conftest import golden_source, read_fixture
from oracles import domain, exhaustive_query, object_names, random_golden_facts, random_program_text, random_query_text

MUSTERMANN = """
pe1 : TForscher[HatName ->> "Mustermann"].
pe2 : TForscher[HatName ->> "Maier"; KooperiertMit ->> pe1].
pe3 : TForscher[HatName ->> "Schulz"].
"""


def skb_of(source, strict=True):
    loaded = load_program(parse_program(source), strict)
    return saturate(loaded.kb, loaded.rules)


def rows(result):
    return {tuple(v.text if isinstance(v, Lit) else v.name for v in row) for row in result.rows}


def test_partner_found_although_mustermann_asserted_nothing():
    skb = skb_of(golden_source(MUSTERMANN))
    result = evaluate(parse_query(read_fixture("golden", "query_mustermann.flo")), skb)
    assert rows(result) == {("Maier",)}


def test_query_over_empty_kb():
    result = evaluate(parse_query(read_fixture("golden", "query_mustermann.flo")), skb_of(golden_source()))
    assert len(result) == 0
    assert result.to_text() == "NAME\n"


def test_membership_respects_subclasses():
    skb = skb_of(golden_source("f : TForscher. o : TOrganisation."))
    assert rows(evaluate(parse_query("FORALL X <- X : TPerson."), skb)) == {("f",)}


def test_projection_collapses_duplicates():
    skb = skb_of(golden_source(MUSTERMANN))
    result = evaluate(parse_query("FORALL N <- P : TForscher[HatName ->> N] and Q : TForscher."), skb)
    assert len(result) == 3


def test_string_match_is_case_sensitive():
    skb = skb_of(golden_source(MUSTERMANN))
    assert len(evaluate(parse_query('FORALL X <- X[HatName ->> "mustermann"].'), skb)) == 0


def test_unknown_class_strict_raises_lenient_warns():
    skb = skb_of(golden_source(MUSTERMANN))
    query = parse_query("FORALL X <- X : TStudent.")
    with pytest.raises(DiagnosticError) as exc:
        evaluate(query, skb)
    assert exc.value.codes == ["UNKNOWN-CLASS"]
    result = evaluate(query, skb, strict=False)
    assert len(result) == 0
    assert [d.code for d in result.diagnostics] == ["UNKNOWN-CLASS"]
    assert not result.diagnostics[0].is_error


def test_serialization_is_sorted_and_quoted():
    skb = skb_of(golden_source(MUSTERMANN))
    result = evaluate(parse_query("FORALL P, N <- P : TForscher[HatName ->> N]."), skb)
    assert result.to_text("\t") == 'P\tN\npe1\t"Mustermann"\npe2\t"Maier"\npe3\t"Schulz"\n'
    assert result.to_text().splitlines()[0] == "P    N"


def test_interest_and_experience_scenario():
    source = golden_source("""
        alice : TForscher[HatForschungsinteressen ->> "Ontologien"].
        bob : TForscher[HatForschungsinteressen ->> "Ontologien"].
        carol : TForscher[HatForschungsinteressen ->> "XML"].
        org1 : TOrganisation.
        prj : TProjekt[HatMitglied ->> alice; HatMitglied ->> carol; HatKunde ->> org1].
    """)
    skb = skb_of(source)
    query = parse_query('FORALL P <- P[HatForschungsinteressen ->> "Ontologien"; HatErfahrungMit ->> org1].')
    result = evaluate(query, skb)
    assert rows(result) == {("alice",)}
    # every object tried by hand as a candidate for P
    hand = {o for o in ("alice", "bob", "carol", "org1", "prj")
            if all(AttributeFact(Oid(o), a.attribute, a.value) in skb for a in query.body)}
    assert hand == {"alice"}
    assert result.rows == exhaustive_query(query, skb.facts, domain(skb.facts, parse_program("")))


def test_match_atom_extends_partial_binding():
    skb = skb_of(golden_source('pe2 : TForscher[HatName ->> "Maier"].'))
    atoms = [MemberAtom(Var("PE2"), "TForscher"), AttrAtom(Var("PE2"), "HatName", Var("NAME"))]
    out = [{"PE2": Oid("pe2")}]
    for atom in atoms:
        out = [ext for b in out for ext in match_atom(atom, skb, b)]
    assert out == [{"PE2": Oid("pe2"), "NAME": Lit("Maier")}]


def test_match_atom_via_subclass():
    skb = skb_of(golden_source("pe1 : TForscher."))
    assert match_atom(MemberAtom(Var("X"), "TPerson"), skb, {}) == [{"X": Oid("pe1")}]


def test_match_atom_ground_atom():
    skb = skb_of(golden_source("pe1 : TForscher."))
    partial = {"Y": Oid("z")}
    assert match_atom(MemberAtom(Oid("pe1"), "TPerson"), skb, partial) == [partial]
    assert match_atom(MemberAtom(Oid("pe1"), "TProjekt"), skb, partial) == []


# oracle and properties

def random_case(seed):
    rng = random.Random(seed)
    program = parse_program(random_program_text(rng))
    loaded = load_program(program, strict=False)
    skb = saturate(loaded.kb, loaded.rules)
    query = parse_query(random_query_text(rng, ["o%d" % i for i in range(8)]))
    return program, skb, query


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_evaluate_matches_exhaustive_enumeration(seed):
    program, skb, query = random_case(seed)
    expected = exhaustive_query(query, skb.facts, domain(skb.facts, program))
    assert evaluate(query, skb).rows == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_join_order_does_not_matter(seed, rnd):
    _, skb, query = random_case(seed)
    body = list(query.body)
    rnd.shuffle(body)
    assert evaluate(Query(query.variables, tuple(body)), skb) == evaluate(query, skb)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_adding_facts_never_removes_rows(seed, cut):
    program, skb, query = random_case(seed)
    k = cut % (len(program.facts) + 1)
    small = parse_program(random_program_text(random.Random(seed)))
    small.facts = small.facts[:k]
    loaded = load_program(small, strict=False)
    assert evaluate(query, saturate(loaded.kb, loaded.rules)).rows <= evaluate(query, skb).rows


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_superclass_query_returns_superset(seed):
    rng = random.Random(seed)
    skb = skb_of(golden_source(random_golden_facts(rng)))
    people = evaluate(parse_query("FORALL X <- X : TPerson."), skb).rows
    researchers = evaluate(parse_query("FORALL X <- X : TForscher."), skb).rows
    assert researchers <= people
    assert {(o,) for o in object_names(skb.base.facts) if o.name.startswith("p")} == people
