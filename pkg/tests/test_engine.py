import random

import pytest
from hypothesis import given, settings, strategies as st

from framekb import AttributeFact, DiagnosticError, Lit, Membership, Oid, compile_rules, explain, parse_program, saturate
from framekb.engine import SaturationOverflow
from framekb.flogic import EQUIVALENCE, Program
from framekb.loader import load_program

from conftest import golden_source, read_fixture
from oracles import naive_saturate, random_program_text

PROJECT = "pr1 : TProjekt[HatMitglied ->> pe1; HatKunde ->> or1]. pe1 : TPerson. or1 : TOrganisation."


def run(source, strict=True):
    loaded = load_program(parse_program(source), strict)
    return saturate(loaded.kb, loaded.rules)


def compiled(listing):
    return compile_rules(parse_program(read_fixture("golden", listing)))


def test_experience_rule_compiles_to_one_implication():
    rules = compiled("rule_experience.flo")
    assert [r.label for r in rules] == ["HatErfahrungMit-implication"]


def test_author_equivalence_compiles_to_both_directions():
    rules = compiled("rule_author.flo")
    assert [r.label for r in rules] == ["HatVeroeffentlicht-equivalence (forward)", "HatAutor-equivalence (backward)"]
    fwd, back = rules.rules
    assert fwd.body == back.head and fwd.head == back.body
    assert all(r.origin.kind == EQUIVALENCE for r in rules)


def test_cooperation_rules_are_mirror_images():
    fwd, back = compiled("rule_cooperation.flo").rules
    swap = str.maketrans("12", "21")
    assert [str(a) for a in back.body] == [str(a).translate(swap) for a in fwd.body]
    assert [str(a) for a in back.head] == [str(a).translate(swap) for a in fwd.head]


def test_head_with_undeclared_class_strict_vs_lenient():
    text = golden_source().replace("PE1 : TPerson\n  [HatErfahrungMit", "PE1 : Person\n  [HatErfahrungMit")
    assert "PE1 : Person" in text
    with pytest.raises(DiagnosticError) as exc:
        load_program(parse_program(text))
    assert "UNKNOWN-CLASS" in exc.value.codes
    loaded = load_program(parse_program(text), strict=False)
    assert [d.code for d in loaded.diagnostics] == ["UNKNOWN-CLASS"]


def test_head_with_undeclared_attribute():
    with pytest.raises(DiagnosticError) as exc:
        load_program(parse_program(golden_source("FORALL X X : TPerson -> X[HatHobby ->> X].")))
    assert exc.value.codes == ["UNKNOWN-ATTRIBUTE"]


def test_project_membership_yields_experience():
    skb = run(golden_source(PROJECT))
    fact = AttributeFact(Oid("pe1"), "HatErfahrungMit", Oid("or1"))
    assert fact in skb.derived
    assert fact not in skb.base.facts


def test_cooperation_is_symmetrized():
    skb = run(golden_source("pe1 : TForscher[KooperiertMit ->> pe2]. pe2 : TForscher."))
    assert AttributeFact(Oid("pe2"), "KooperiertMit", Oid("pe1")) in skb.derived


def test_empty_fact_base_derives_nothing():
    skb = run(golden_source())
    assert skb.derived == frozenset()


def test_membership_is_closed_upwards():
    skb = run(golden_source("f : TForscher."))
    assert {Membership(Oid("f"), c) for c in ("TAngestellter", "TPerson", "TObject", "Object")} <= skb.facts


def test_base_and_derived_are_disjoint():
    skb = run(golden_source(PROJECT, "pe1 : TPerson[HatErfahrungMit ->> or1]."))
    assert not (skb.base.facts & skb.derived)


def test_explain_names_rule_and_binding():
    skb = run(golden_source(PROJECT))
    ex = explain(skb, AttributeFact(Oid("pe1"), "HatErfahrungMit", Oid("or1")))
    assert ex.rule == "HatErfahrungMit-implication"
    assert ex.binding == {"PE1": Oid("pe1"), "PR1": Oid("pr1"), "OR1": Oid("or1")}
    assert all(p.asserted for p in ex.premises)
    assert {p.fact for p in ex.premises} == {
        Membership(Oid("pr1"), "TProjekt"),
        AttributeFact(Oid("pr1"), "HatMitglied", Oid("pe1")),
        AttributeFact(Oid("pr1"), "HatKunde", Oid("or1")),
    }
    assert "[by HatErfahrungMit-implication {OR1=or1, PE1=pe1, PR1=pr1}]" in ex.format()


def test_explain_asserted_and_absent():
    skb = run(golden_source(PROJECT))
    assert explain(skb, Membership(Oid("pr1"), "TProjekt")).asserted
    assert explain(skb, AttributeFact(Oid("pe1"), "HatName", Lit("x"))) is None


def test_explain_chains_through_derived_premises():
    skb = run(golden_source("v1 : TVeroeffentlichung[HatAutor ->> a]. a : TForscher[KooperiertMit ->> b]. b : TForscher."))
    ex = explain(skb, AttributeFact(Oid("a"), "HatVeroeffentlicht", Oid("v1")))
    assert ex.rule == "HatVeroeffentlicht-equivalence (forward)"


def test_ill_typed_derivation_dropped_in_strict_kept_in_lenient():
    # p is only a TPerson, so deriving KooperiertMit on it is outside its signature.
    text = (read_fixture("golden", "hierarchy.flo") + read_fixture("golden", "attributes.flo")
            + "FORALL X, Y X : TForscher[KooperiertMit ->> Y] -> Y[KooperiertMit ->> X]."
            + "f : TForscher[KooperiertMit ->> p]. p : TPerson.")
    bad = AttributeFact(Oid("p"), "KooperiertMit", Oid("f"))
    strict = run(text)
    assert bad not in strict.facts
    assert any("KooperiertMit" in d.message and "binding" in d.message for d in strict.diagnostics)
    lenient = run(text, strict=False)
    assert bad in lenient.facts
    assert strict.facts <= lenient.facts


def test_iteration_cap():
    loaded = load_program(parse_program(golden_source(PROJECT)))
    with pytest.raises(SaturationOverflow):
        saturate(loaded.kb, loaded.rules, max_rounds=0)


# oracle and properties

def _saturate_text(text, strict=False):
    program = parse_program(text)
    loaded = load_program(program, strict=strict)
    return program, saturate(loaded.kb, loaded.rules)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_semi_naive_matches_naive_oracle(seed):
    program, skb = _saturate_text(random_program_text(random.Random(seed), n_objects=6, n_rules=3))
    assert skb.facts == naive_saturate(program)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_saturation_is_idempotent(seed):
    program, skb = _saturate_text(random_program_text(random.Random(seed)))
    again = Program(program.class_decls, program.signatures, sorted(skb.facts, key=str), program.rules)
    loaded = load_program(again, strict=False)
    assert saturate(loaded.kb, loaded.rules).derived == frozenset()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_saturation_is_monotone(seed, cut):
    program = parse_program(random_program_text(random.Random(seed)))
    k = cut % (len(program.facts) + 1)
    small = Program(program.class_decls, program.signatures, program.facts[:k], program.rules)

    def closure(p):
        loaded = load_program(p, strict=False)
        return saturate(loaded.kb, loaded.rules).facts

    assert closure(small) <= closure(program)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_saturation_ignores_fact_and_rule_order(seed, rnd):
    program = parse_program(random_program_text(random.Random(seed)))
    facts, rules = list(program.facts), list(program.rules)
    rnd.shuffle(facts)
    rnd.shuffle(rules)
    shuffled = Program(program.class_decls, program.signatures, facts, rules)

    def closure(p):
        loaded = load_program(p, strict=False)
        return saturate(loaded.kb, loaded.rules).facts

    assert closure(shuffled) == closure(program)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_strict_result_is_contained_in_lenient(seed):
    text = random_program_text(random.Random(seed))
    try:
        _, strict = _saturate_text(text, strict=True)
    except DiagnosticError:
        return
    _, lenient = _saturate_text(text, strict=False)
    assert strict.facts <= lenient.facts
