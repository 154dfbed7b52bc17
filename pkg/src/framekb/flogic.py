"""Lexer, recursive-descent parser and pretty-printer for the Frame-Logic subset.

Statements end with ``.``::

    TForscher :: TAngestellter.                 // class declaration
    TPerson[HatName ==> STRING].                 // attribute signatures
    pe1 : TForscher[HatName ->> "Maier"].        // facts
    FORALL X, Y  X : C[A ->> Y]  ->  Y : D.      // implication
    FORALL X, Y  X[A ->> Y]  <->  Y[B ->> X].    // equivalence
    FORALL N <- P : C[A ->> N].                  // query

Inside brackets entries may be separated by ``;``, ``,`` or nothing. Top-level
atoms of a rule or query body are joined with ``and`` or ``,``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from framekb.diagnostics import Diagnostic, DiagnosticError, error, warning
from framekb.ontology import (
    AttributeFact,
    AttributeSignature,
    ClassDecl,
    Lit,
    Membership,
    Oid,
    Pos,
    quote,
)


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Var, Oid, Lit]


@dataclass(frozen=True)
class MemberAtom:
    term: Term
    cls: str
    pos: Pos | None = field(default=None, compare=False)

    def variables(self) -> set[str]:
        return {self.term.name} if isinstance(self.term, Var) else set()

    def __str__(self) -> str:
        return "%s : %s" % (self.term, self.cls)


@dataclass(frozen=True)
class AttrAtom:
    subject: Term
    attribute: str
    value: Term
    pos: Pos | None = field(default=None, compare=False)

    def variables(self) -> set[str]:
        return {t.name for t in (self.subject, self.value) if isinstance(t, Var)}

    def __str__(self) -> str:
        return "%s[%s ->> %s]" % (self.subject, self.attribute, self.value)


Atom = Union[MemberAtom, AttrAtom]

IMPLICATION = "implication"
EQUIVALENCE = "equivalence"


@dataclass(frozen=True)
class Rule:
    kind: str
    variables: tuple
    body: tuple
    head: tuple
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Query:
    variables: tuple
    body: tuple
    pos: Pos | None = field(default=None, compare=False)


@dataclass
class Program:
    class_decls: list = field(default_factory=list)
    signatures: list = field(default_factory=list)
    facts: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list, compare=False, repr=False)

    def extend(self, other: Program) -> None:
        self.class_decls.extend(other.class_decls)
        self.signatures.extend(other.signatures)
        self.facts.extend(other.facts)
        self.rules.extend(other.rules)
        self.queries.extend(other.queries)
        self.diagnostics.extend(other.diagnostics)


def atom_variables(atoms) -> set[str]:
    out: set[str] = set()
    for atom in atoms:
        out |= atom.variables()
    return out


# -- lexer ------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


KEYWORDS = {"FORALL": "FORALL", "and": "AND", "AND": "AND"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v\ufeff]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[^\W\d]\w*)
  | (?P<string>")
  | (?P<ellipsis>\.\.\.)
  | (?P<op>==>|->>|<->|->|<-|::|[:\[\];,.])
    """,
    re.VERBOSE,
)

_OP_KINDS = {
    "==>": "SIG",
    "->>": "MVAL",
    "<->": "EQUIV",
    "->": "IMPL",
    "<-": "QUERY",
    "::": "SUB",
    ":": "COLON",
    "[": "LBRACK",
    "]": "RBRACK",
    ";": "SEMI",
    ",": "COMMA",
    ".": "DOT",
}


def tokenize(source: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        col = pos - line_start + 1
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            diags.append(error("LEX", "unexpected character %r" % source[pos], line, col))
            pos += 1
            continue
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            tokens.append(Token(KEYWORDS.get(word, "IDENT"), word, line, col))
        elif kind == "string":
            end, text, problem = _scan_string(source, pos + 1)
            if problem:
                diags.append(error("LEX", problem, line, col))
            tokens.append(Token("STRING", text, line, col))
            pos = end
            continue
        elif kind == "ellipsis":
            diags.append(error("LEX", "'...' is not part of the language", line, col))
        elif kind == "op":
            tokens.append(Token(_OP_KINDS[m.group()], m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens, diags


def _scan_string(source: str, pos: int) -> tuple[int, str, str | None]:
    out = []
    n = len(source)
    while pos < n:
        ch = source[pos]
        if ch == '"':
            return pos + 1, "".join(out), None
        if ch == "\n":
            return pos, "".join(out), "unterminated string literal"
        if ch == "\\":
            nxt = source[pos + 1] if pos + 1 < n else ""
            if nxt in ('"', "\\"):
                out.append(nxt)
                pos += 2
                continue
            out.append(ch)
            pos += 1
            if nxt:
                return _skip_string(source, pos, "unknown escape sequence \\%s" % nxt, out)
            continue
        out.append(ch)
        pos += 1
    return pos, "".join(out), "unterminated string literal"


def _skip_string(source, pos, problem, out):
    end, rest, _ = _scan_string(source, pos)
    return end, "".join(out) + rest, problem


def is_implicit_variable(name: str) -> bool:
    """Query convention: all-caps identifiers (``PE1``, ``NAME``) are variables."""
    return name[0].isalpha() and name.upper() == name and any(c.isalpha() for c in name)


# -- parser -----------------------------------------------------------------


class _SyntaxError(Exception):
    pass


class Parser:
    def __init__(self, source: str, filename: str | None = None):
        self.filename = filename
        self.tokens, self.diags = tokenize(source)
        self.i = 0
        self.program = Program()
        self.variables: set[str] | None = None
        self.implicit_vars = False

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def pos(self, tok: Token) -> Pos:
        return Pos(tok.line, tok.col, self.filename)

    def at(self, *kinds: str) -> bool:
        return self.tok.kind in kinds

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            self.fail("expected %s, found %s" % (what, describe(self.tok)))
        return self.advance()

    def fail(self, message: str, tok: Token | None = None, code: str = "SYNTAX"):
        tok = tok or self.tok
        self.diags.append(error(code, message, tok.line, tok.col))
        raise _SyntaxError()

    def sync(self) -> None:
        depth = 0
        while not self.at("EOF"):
            t = self.advance()
            if t.kind == "LBRACK":
                depth += 1
            elif t.kind == "RBRACK":
                depth = max(0, depth - 1)
            elif t.kind == "DOT" and depth == 0:
                return

    def parse(self) -> Program:
        while not self.at("EOF"):
            start = self.i
            try:
                self.statement()
            except _SyntaxError:
                if self.i == start:
                    self.advance()
                if self.tokens[self.i - 1].kind != "DOT":
                    self.sync()
        self.program.diagnostics = self.diags
        return self.program

    # statements

    def statement(self) -> None:
        if self.at("FORALL"):
            self.forall_statement()
        elif self.at("IDENT"):
            self.plain_statement()
        else:
            self.fail("expected a declaration, fact, rule or query, found %s" % describe(self.tok))

    def plain_statement(self) -> None:
        name_tok = self.advance()
        pos = self.pos(name_tok)
        name = name_tok.text
        if self.at("DOT"):
            self.advance()
            self.program.class_decls.append(ClassDecl(name, frozenset(), pos))
        elif self.at("SUB"):
            self.advance()
            sup = self.expect("IDENT", "a superclass name")
            self.expect("DOT", "'.' after class declaration")
            self.program.class_decls.append(ClassDecl(name, frozenset([sup.text]), pos))
        elif self.at("LBRACK"):
            entries = self.bracket()
            self.expect("DOT", "'.' after attribute block")
            sigs = [e for e in entries if e[0] == "SIG"]
            vals = [e for e in entries if e[0] == "MVAL"]
            if not entries:
                self.program.class_decls.append(ClassDecl(name, frozenset(), pos))
            elif sigs and vals:
                self.fail("cannot mix signatures (==>) and values (->>) in one block", name_tok)
            elif sigs:
                for _, attr, vt, p in sigs:
                    self.program.signatures.append(AttributeSignature(name, attr, vt.text, p))
            else:
                for _, attr, value, p in vals:
                    self.program.facts.append(AttributeFact(Oid(name), attr, self.ground(value), p))
        elif self.at("COLON"):
            self.advance()
            cls = self.expect("IDENT", "a class name")
            entries = self.bracket() if self.at("LBRACK") else []
            self.expect("DOT", "'.' after fact")
            self.program.facts.append(Membership(Oid(name), cls.text, pos))
            for kind, attr, value, p in entries:
                if kind == "SIG":
                    self.fail("signatures (==>) are declared on classes, not objects", value)
                self.program.facts.append(AttributeFact(Oid(name), attr, self.ground(value), p))
        else:
            self.fail("expected '::', ':', '[' or '.' after %s, found %s" % (name, describe(self.tok)))

    def ground(self, tok: Token):
        if tok.kind == "STRING":
            return Lit(tok.text)
        return Oid(tok.text)

    def bracket(self) -> list[tuple]:
        """``[ entry (sep? entry)* ]`` with entries ``A ==> T`` or ``A ->> v``."""
        self.expect("LBRACK", "'['")
        entries = []
        while not self.at("RBRACK"):
            attr = self.expect("IDENT", "an attribute name")
            p = self.pos(attr)
            if self.at("SIG"):
                self.advance()
                vt = self.expect("IDENT", "a type name")
                entries.append(("SIG", attr.text, vt, p))
            elif self.at("MVAL"):
                self.advance()
                if not self.at("IDENT", "STRING"):
                    self.fail("expected a value, found %s" % describe(self.tok))
                entries.append(("MVAL", attr.text, self.advance(), p))
            elif self.at("IMPL"):
                self.fail("single-valued attributes (->) are not supported; use ->>")
            else:
                self.fail("expected '==>' or '->>' after attribute %s, found %s" % (attr.text, describe(self.tok)))
            if self.at("SEMI", "COMMA"):
                self.advance()
                if self.at("RBRACK"):
                    self.fail("expected an attribute after separator, found ']'")
            elif not self.at("RBRACK", "IDENT"):
                self.fail("expected ';', ',' or ']', found %s" % describe(self.tok))
        self.advance()
        return entries

    def forall_statement(self) -> None:
        start = self.advance()
        pos = self.pos(start)
        names: list[str] = []
        seen: set[str] = set()
        v = self.expect("IDENT", "a variable name")
        while True:
            if v.text in seen:
                self.diags.append(error("DUPLICATE-VAR", "variable %s listed twice in FORALL" % v.text, v.line, v.col))
            seen.add(v.text)
            names.append(v.text)
            if self.at("COMMA") and self.peek().kind == "IDENT":
                self.advance()
                v = self.advance()
            else:
                break
        self.variables = set(names)
        try:
            if self.at("QUERY"):
                self.advance()
                self.implicit_vars = True
                body = self.conjunction()
                self.expect("DOT", "'.' at end of query")
                self.finish_query(names, body, pos)
            else:
                body = self.conjunction()
                if self.at("IMPL"):
                    kind = IMPLICATION
                elif self.at("EQUIV"):
                    kind = EQUIVALENCE
                else:
                    self.fail("expected '->' or '<->' in rule, found %s" % describe(self.tok))
                self.advance()
                head = self.conjunction()
                self.expect("DOT", "'.' at end of rule")
                self.finish_rule(kind, names, body, head, pos)
        finally:
            self.variables = None
            self.implicit_vars = False

    def finish_rule(self, kind, names, body, head, pos) -> None:
        bv, hv = atom_variables(body), atom_variables(head)
        ok = True
        missing = sorted(hv - bv)
        if missing:
            ok = False
            self.diags.append(error("UNSAFE-RULE", "head variable(s) %s do not occur in the body" % ", ".join(missing), pos.line, pos.col, pos.file))
        if kind == EQUIVALENCE:
            back = sorted(bv - hv)
            if back:
                ok = False
                self.diags.append(error("UNSAFE-RULE", "variable(s) %s of the left side do not occur on the right side" % ", ".join(back), pos.line, pos.col, pos.file))
        unused = [n for n in names if n not in bv | hv]
        if unused:
            self.diags.append(warning("UNUSED-VAR", "FORALL variable(s) %s are never used" % ", ".join(unused), pos.line, pos.col, pos.file))
        if ok:
            self.program.rules.append(Rule(kind, tuple(names), tuple(body), tuple(head), pos))

    def finish_query(self, names, body, pos) -> None:
        bv = atom_variables(body)
        missing = [n for n in names if n not in bv]
        if missing:
            self.diags.append(error("UNSAFE-QUERY", "projected variable(s) %s do not occur in the query body" % ", ".join(missing), pos.line, pos.col, pos.file))
            return
        self.program.queries.append(Query(tuple(names), tuple(body), pos))

    def conjunction(self) -> list:
        atoms = self.molecule()
        while self.at("AND", "COMMA"):
            self.advance()
            atoms.extend(self.molecule())
        return atoms

    def term(self) -> Term:
        t = self.tok
        if t.kind == "STRING":
            self.advance()
            return Lit(t.text)
        if t.kind == "IDENT":
            self.advance()
            if t.text in self.variables or (self.implicit_vars and is_implicit_variable(t.text)):
                return Var(t.text)
            return Oid(t.text)
        self.fail("expected a term, found %s" % describe(t))

    def molecule(self) -> list:
        start = self.tok
        pos = self.pos(start)
        subject = self.term()
        atoms: list = []
        if self.at("COLON"):
            self.advance()
            cls = self.expect("IDENT", "a class name")
            atoms.append(MemberAtom(subject, cls.text, pos))
        if self.at("LBRACK"):
            for kind, attr, value, p in self.bracket():
                if kind == "SIG":
                    self.fail("signatures (==>) cannot appear in rules or queries", value)
                atoms.append(AttrAtom(subject, attr, self._as_term(value), p))
        if not atoms:
            self.fail("expected ':' or '[' after %s" % start.text, start)
        return atoms

    def _as_term(self, tok: Token) -> Term:
        if tok.kind == "STRING":
            return Lit(tok.text)
        if tok.text in self.variables or (self.implicit_vars and is_implicit_variable(tok.text)):
            return Var(tok.text)
        return Oid(tok.text)


def describe(tok: Token) -> str:
    if tok.kind == "EOF":
        return "end of input"
    if tok.kind == "STRING":
        return "string %s" % quote(tok.text)
    return "'%s'" % tok.text


def parse_program(source: str, filename: str | None = None) -> Program:
    """Parse source text into a :class:`Program`.

    Raises :class:`DiagnosticError` if any error was found; warnings are kept
    on ``Program.diagnostics``.
    """
    program = Parser(source, filename).parse()
    if filename is not None:
        program.diagnostics = [d.with_file(filename) for d in program.diagnostics]
    if any(d.is_error for d in program.diagnostics):
        raise DiagnosticError(program.diagnostics)
    return program


def parse_query(source: str, filename: str | None = None) -> Query:
    program = parse_program(source, filename)
    others = len(program.class_decls) + len(program.signatures) + len(program.facts) + len(program.rules)
    if len(program.queries) != 1 or others:
        raise DiagnosticError([error("SYNTAX", "expected exactly one query statement", 1, 1)])
    return program.queries[0]


# -- pretty printer ---------------------------------------------------------


def _subject(atom):
    return atom.term if isinstance(atom, MemberAtom) else atom.subject


def format_molecules(atoms) -> str:
    groups: list[list] = []
    for atom in atoms:
        if groups and isinstance(atom, AttrAtom) and _subject(groups[-1][0]) == atom.subject:
            groups[-1].append(atom)
        else:
            groups.append([atom])
    parts = []
    for group in groups:
        first = group[0]
        text = str(_subject(first))
        attrs = group
        if isinstance(first, MemberAtom):
            text += " : " + first.cls
            attrs = group[1:]
        if attrs:
            text += " [" + "; ".join("%s ->> %s" % (a.attribute, a.value) for a in attrs) + "]"
        parts.append(text)
    return "\n  and ".join(parts)


def format_rule(rule: Rule) -> str:
    arrow = "->" if rule.kind == IMPLICATION else "<->"
    return "FORALL %s\n  %s\n%s\n  %s." % (
        ", ".join(rule.variables), format_molecules(rule.body), arrow, format_molecules(rule.head))


def format_query(query: Query) -> str:
    return "FORALL %s\n<-\n  %s." % (", ".join(query.variables), format_molecules(query.body))


def format_program(program: Program) -> str:
    lines = []
    for decl in program.class_decls:
        if decl.supers:
            lines.extend("%s :: %s." % (decl.name, sup) for sup in sorted(decl.supers))
        else:
            lines.append("%s." % decl.name)
    i = 0
    sigs = program.signatures
    while i < len(sigs):
        j = i
        while j < len(sigs) and sigs[j].owner == sigs[i].owner:
            j += 1
        body = "\n".join("    %s ==> %s" % (s.attribute, s.value_type) for s in sigs[i:j])
        lines.append("%s[\n%s\n]." % (sigs[i].owner, body))
        i = j
    for fact in program.facts:
        lines.append("%s." % fact)
    lines.extend(format_rule(r) for r in program.rules)
    lines.extend(format_query(q) for q in program.queries)
    return "\n".join(lines) + ("\n" if lines else "")
