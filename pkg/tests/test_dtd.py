import itertools
import re

import pytest
from hypothesis import assume, given, settings, strategies as st

from framekb import DiagnosticError
from framekb.dtd import (
    CHILDREN,
    EMPTY,
    MIXED,
    Choice,
    ContentAutomaton,
    Name,
    Repeat,
    Seq,
    parse_dtd,
    resolve_dtd,
    validate,
)
from framekb.xmlreader import parse_xml

from conftest import read_fixture

PERSON = read_fixture("xml", "person.xml")


def person_dtd():
    return parse_dtd(read_fixture("xml", "person.dtd"), "person.dtd")


def check(xml):
    return validate(parse_xml(xml).root, person_dtd())


def test_person_dtd_declarations():
    dtd = person_dtd()
    assert dtd.elements["TPerson"].kind == CHILDREN
    assert dtd.elements["TPerson"].model == Seq((Name("TName"), Name("TEmail"), Name("TTelefon")))
    assert dtd.elements["TName"].describe() == "(TVorname, TNachname)"
    assert dtd.elements["TEmail"].kind == MIXED
    assert dtd.elements["TEmail"].describe() == "(#PCDATA)"
    assert dtd.diagnostics == []


def test_person_instance_is_valid():
    assert check(PERSON) == []


def test_missing_email_is_one_violation():
    xml = re.sub(r"\s*<TEmail>.*</TEmail>", "", PERSON)
    diags = check(xml)
    assert len(diags) == 1
    assert diags[0].code == "DTD-INVALID"
    assert diags[0].message == "/TPerson: expected TEmail after TName, found TTelefon"
    assert (diags[0].line, diags[0].col) == (1, 1)


def test_name_after_phone_is_one_violation():
    name = re.search(r"\s*<TName>.*</TName>", PERSON, re.S).group()
    xml = PERSON.replace(name, "").replace("</TTelefon>", "</TTelefon>" + name)
    diags = check(xml)
    assert len(diags) == 1
    assert diags[0].message == "/TPerson: expected TName as first child, found TEmail"


def test_missing_trailing_child_reports_end_of_content():
    diags = check("<TPerson><TName><TVorname/><TNachname/></TName><TEmail/></TPerson>")
    assert [d.message for d in diags] == ["/TPerson: expected TTelefon after TEmail, found end of content"]


def test_text_in_element_content():
    diags = check("<TName>Hans<TVorname/><TNachname/></TName>")
    assert len(diags) == 1 and "text not allowed" in diags[0].message


def test_undeclared_element_in_instance():
    diags = check("<TPerson><TName><TVorname/><TNachname/></TName><TEmail/><TTelefon/><TFax/></TPerson>")
    assert sorted(d.code for d in diags) == ["DTD-INVALID", "DTD-UNKNOWN-ELEMENT"]
    assert any(d.message == "/TPerson/TFax: element TFax is not declared" for d in diags)


def test_element_inside_pcdata():
    diags = check("<TEmail><TName/></TEmail>")
    assert [d.code for d in diags] == ["DTD-INVALID", "DTD-INVALID"]


def test_doctype_root_mismatch():
    diags = validate(parse_xml("<TEmail>x</TEmail>").root, person_dtd(), "TPerson")
    assert len(diags) == 1 and "DOCTYPE names TPerson" in diags[0].message


def test_reference_to_undeclared_element():
    with pytest.raises(DiagnosticError) as exc:
        parse_dtd("<!ELEMENT TPerson (TName, TEmail)>\n<!ELEMENT TName (#PCDATA)>")
    assert exc.value.codes == ["DTD-UNDECLARED"]
    assert exc.value.diagnostics[0].line == 1


def test_ambiguous_model():
    with pytest.raises(DiagnosticError) as exc:
        parse_dtd("<!ELEMENT a ((b, c) | (b, d))>\n<!ELEMENT b EMPTY>\n<!ELEMENT c EMPTY>\n<!ELEMENT d EMPTY>")
    assert exc.value.codes == ["DTD-AMBIGUOUS"]


def test_syntax_errors_and_unsupported_constructs():
    for src, code in [("<!ELEMENT a (b, c | d)>", "DTD-SYNTAX"),
                      ("<!ENTITY % p 'x'>", "DTD-SYNTAX"),
                      ("<![INCLUDE[ <!ELEMENT a EMPTY> ]]>", "DTD-SYNTAX"),
                      ("<!ELEMENT a EMPTY>\n<!ELEMENT a ANY>", "DTD-DUPLICATE")]:
        with pytest.raises(DiagnosticError) as exc:
            parse_dtd(src)
        assert code in exc.value.codes, src


def test_empty_and_attlist():
    dtd = parse_dtd('<!ELEMENT br EMPTY>\n<!ATTLIST br id ID #IMPLIED kind (a|b) "a">')
    assert dtd.elements["br"].kind == EMPTY
    assert [(a.name, a.type, a.default) for a in dtd.attlists["br"]] == [("id", "ID", "#IMPLIED"), ("kind", "(a|b)", '"a"')]
    assert validate(parse_xml("<br>x</br>").root, dtd)[0].message == "/br: declared EMPTY but has content"


def test_internal_subset_wins_over_system_id():
    doc = parse_xml('<!DOCTYPE a SYSTEM "a.dtd" [\n<!ELEMENT a EMPTY>\n]>\n<a/>')
    dtd, diags = resolve_dtd(doc.doctype, read=lambda p: "<!ELEMENT a ANY>")
    assert dtd.elements["a"].kind == EMPTY
    assert [d.code for d in diags] == ["DTD-BOTH"]


def test_system_id_is_read():
    doc = parse_xml('<!DOCTYPE TPerson SYSTEM "person.dtd">' + PERSON)
    dtd, diags = resolve_dtd(doc.doctype, read=lambda p: read_fixture("xml", p))
    assert diags == []
    assert validate(doc.root, dtd, doc.doctype.name) == []


def test_internal_subset_line_numbers():
    doc = parse_xml('<!DOCTYPE a [\n<!ELEMENT a EMPTY>\n<!ELEMENT a ANY>\n]>\n<a/>')
    with pytest.raises(DiagnosticError) as exc:
        resolve_dtd(doc.doctype)
    assert exc.value.diagnostics[0].line == 3


# regex oracle for random content models

SYMBOLS = ["a", "b", "c"]


def models(depth=3):
    leaf = st.sampled_from(SYMBOLS).map(Name)
    if depth == 0:
        return leaf
    sub = models(depth - 1)
    return st.one_of(
        leaf,
        st.lists(sub, min_size=2, max_size=3).map(lambda xs: Seq(tuple(xs))),
        st.lists(sub, min_size=2, max_size=3).map(lambda xs: Choice(tuple(xs))),
        st.tuples(sub, st.sampled_from("?*+")).map(lambda t: Repeat(*t)),
    )


def to_regex(model) -> str:
    if isinstance(model, Name):
        return "(?:%s;)" % model.name
    if isinstance(model, Repeat):
        return "(?:%s)%s" % (to_regex(model.item), model.op)
    joiner = "" if isinstance(model, Seq) else "|"
    return "(?:%s)" % joiner.join(to_regex(i) for i in model.items)


WORDS = [list(w) for n in range(7) for w in itertools.product(SYMBOLS, repeat=n)]


@settings(max_examples=150, deadline=None)
@given(models())
def test_automaton_agrees_with_regex(model):
    automaton = ContentAutomaton(model)
    assume(automaton.conflict is None)
    pattern = re.compile(to_regex(model))
    for word in WORDS:
        expected = pattern.fullmatch("".join(s + ";" for s in word)) is not None
        assert automaton.accepts(word) == expected, (str(model), word)


@settings(max_examples=100, deadline=None)
@given(models())
def test_model_text_round_trips_through_parser(model):
    automaton = ContentAutomaton(model)
    assume(automaton.conflict is None)
    text = str(model) if isinstance(model, (Seq, Choice)) else "(%s)" % model
    decls = "".join("<!ELEMENT %s EMPTY>\n" % s for s in SYMBOLS)
    dtd = parse_dtd("<!ELEMENT r %s>\n%s" % (text, decls))
    for word in WORDS[:40]:
        assert dtd.elements["r"].automaton.accepts(word) == automaton.accepts(word)
