"""Document type definitions: ELEMENT content models and validation.

Children content models compile to a Glushkov position automaton. A model
is accepted only if that automaton is deterministic (no two positions with
the same name reachable from one state), which is the XML rule for
unambiguous content models.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field

from framekb.diagnostics import Diagnostic, DiagnosticError, error, warning
from framekb.xmlreader import Element, internal_entities

EMPTY = "EMPTY"
ANY = "ANY"
MIXED = "MIXED"
CHILDREN = "CHILDREN"

_NAME = r"[^\W\d][\w.\-:]*|[_:][\w.\-:]*"


@dataclass(frozen=True)
class Name:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Seq:
    items: tuple

    def __str__(self) -> str:
        return "(" + ", ".join(map(str, self.items)) + ")"


@dataclass(frozen=True)
class Choice:
    items: tuple

    def __str__(self) -> str:
        return "(" + " | ".join(map(str, self.items)) + ")"


@dataclass(frozen=True)
class Repeat:
    item: object
    op: str

    def __str__(self) -> str:
        inner = "(%s)" % self.item if isinstance(self.item, Repeat) else str(self.item)
        return inner + self.op


def model_names(model) -> set[str]:
    if isinstance(model, Name):
        return {model.name}
    if isinstance(model, Repeat):
        return model_names(model.item)
    return set().union(*(model_names(i) for i in model.items))


class ContentAutomaton:
    """Glushkov automaton of a children content model."""

    def __init__(self, model):
        self.model = model
        self.symbols: list[str] = []
        self.follow: dict[int, set[int]] = defaultdict(set)
        self.nullable, self.first, self.last = self._build(model)
        self.conflict = self._find_conflict()

    def _build(self, node):
        if isinstance(node, Name):
            p = len(self.symbols)
            self.symbols.append(node.name)
            return False, {p}, {p}
        if isinstance(node, Repeat):
            n, f, l = self._build(node.item)
            if node.op in "*+":
                for p in l:
                    self.follow[p] |= f
            return (n or node.op in "?*"), f, l
        if isinstance(node, Choice):
            parts = [self._build(i) for i in node.items]
            return (any(n for n, _, _ in parts), set().union(*(f for _, f, _ in parts)),
                    set().union(*(l for _, _, l in parts)))
        null, first, last = True, set(), set()
        for item in node.items:
            n, f, l = self._build(item)
            for p in last:
                self.follow[p] |= f
            if null:
                first |= f
            last = l | last if n else l
            null = null and n
        return null, first, last

    def _find_conflict(self) -> str | None:
        for positions in [self.first] + [self.follow[p] for p in range(len(self.symbols))]:
            seen = set()
            for p in sorted(positions):
                if self.symbols[p] in seen:
                    return self.symbols[p]
                seen.add(self.symbols[p])
        return None

    def _step(self, state, name):
        options = self.first if state is None else self.follow[state]
        for p in options:
            if self.symbols[p] == name:
                return p
        return -1

    def expected(self, state) -> list[str]:
        options = self.first if state is None else self.follow[state]
        return sorted({self.symbols[p] for p in options})

    def accepting(self, state) -> bool:
        return self.nullable if state is None else state in self.last

    def run(self, names: list[str]) -> tuple[int, object]:
        """Index of the first rejected name (``len(names)`` if the end is rejected), or -1."""
        state = None
        for i, name in enumerate(names):
            nxt = self._step(state, name)
            if nxt < 0:
                return i, state
            state = nxt
        return (-1, state) if self.accepting(state) else (len(names), state)

    def accepts(self, names: list[str]) -> bool:
        return self.run(names)[0] < 0


@dataclass
class ElementDecl:
    name: str
    kind: str
    model: object = None
    mixed: frozenset = frozenset()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)
    automaton: ContentAutomaton | None = field(default=None, compare=False, repr=False)

    def describe(self) -> str:
        if self.kind == CHILDREN:
            return str(self.model)
        if self.kind == MIXED:
            return "(#PCDATA" + "".join(" | " + n for n in sorted(self.mixed)) + ")" + ("*" if self.mixed else "")
        return self.kind


@dataclass
class AttributeDecl:
    element: str
    name: str
    type: str
    default: str


@dataclass
class DocumentTypeDefinition:
    elements: dict = field(default_factory=dict)
    attlists: dict = field(default_factory=dict)
    entities: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)


class _DtdParser:
    def __init__(self, source: str, line_offset: int):
        self.src = source
        self.pos = 0
        self.line_offset = line_offset
        self.dtd = DocumentTypeDefinition()
        self.diags: list[Diagnostic] = []

    def loc(self, offset: int) -> tuple[int, int]:
        line = self.src.count("\n", 0, offset) + 1
        col = offset - (self.src.rfind("\n", 0, offset) + 1) + 1
        return line + self.line_offset, col

    def fail(self, message: str, offset: int, code: str = "DTD-SYNTAX"):
        self.diags.append(error(code, message, *self.loc(offset)))
        raise _Malformed()

    def ws(self) -> None:
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def name(self) -> str:
        m = re.compile(_NAME).match(self.src, self.pos)
        if not m:
            self.fail("expected a name", self.pos)
        self.pos = m.end()
        return m.group()

    def parse(self) -> DocumentTypeDefinition:
        src = self.src
        while True:
            self.ws()
            if self.pos >= len(src):
                break
            start = self.pos
            try:
                if src.startswith("<!--", start):
                    end = src.find("-->", start + 4)
                    if end < 0:
                        self.fail("unterminated comment", start)
                    self.pos = end + 3
                elif src.startswith("<!ELEMENT", start):
                    self.element_decl()
                elif src.startswith("<!ATTLIST", start):
                    self.attlist_decl()
                elif src.startswith("<!ENTITY", start):
                    self.skip_decl()
                    m = re.match(r"<!ENTITY\s+%", src[start:self.pos])
                    if m:
                        self.fail("parameter entities are not supported", start)
                elif src.startswith("<!NOTATION", start) or src.startswith("<?", start):
                    self.skip_decl()
                elif src.startswith("<![", start):
                    self.fail("conditional sections are not supported", start)
                elif src[start] == "%":
                    self.fail("parameter entity references are not supported", start)
                else:
                    self.fail("unexpected text in DTD", start)
            except _Malformed:
                end = src.find(">", start + 1)
                self.pos = len(src) if end < 0 else end + 1
        self.dtd.entities = internal_entities(src)
        self.check()
        self.dtd.diagnostics = self.diags
        return self.dtd

    def skip_decl(self) -> None:
        start = self.pos
        quote = None
        i = start + 2
        while i < len(self.src):
            ch = self.src[i]
            if quote:
                if ch == quote:
                    quote = None
            elif ch in "\"'":
                quote = ch
            elif ch == ">":
                self.pos = i + 1
                return
            i += 1
        self.fail("unterminated declaration", start)

    def expect(self, ch: str) -> None:
        self.ws()
        if not self.src.startswith(ch, self.pos):
            self.fail("expected %r" % ch, self.pos)
        self.pos += len(ch)

    def element_decl(self) -> None:
        start = self.pos
        self.pos += len("<!ELEMENT")
        self.ws()
        name = self.name()
        line, col = self.loc(start)
        self.ws()
        if self.src.startswith("EMPTY", self.pos):
            self.pos += 5
            decl = ElementDecl(name, EMPTY, line=line, col=col)
        elif self.src.startswith("ANY", self.pos):
            self.pos += 3
            decl = ElementDecl(name, ANY, line=line, col=col)
        elif re.compile(r"\(\s*#PCDATA").match(self.src, self.pos):
            decl = self.mixed(name, line, col)
        elif self.src.startswith("(", self.pos):
            model = self.particle()
            decl = ElementDecl(name, CHILDREN, model, line=line, col=col)
        else:
            self.fail("expected a content specification for %s" % name, self.pos)
        self.expect(">")
        if name in self.dtd.elements:
            self.diags.append(error("DTD-DUPLICATE", "element %s declared more than once" % name, line, col))
            return
        self.dtd.elements[name] = decl

    def mixed(self, name, line, col) -> ElementDecl:
        self.pos = self.src.index("#PCDATA", self.pos) + len("#PCDATA")
        names = []
        while True:
            self.ws()
            if self.src.startswith("|", self.pos):
                self.pos += 1
                self.ws()
                names.append(self.name())
            elif self.src.startswith(")", self.pos):
                self.pos += 1
                break
            else:
                self.fail("malformed mixed content model for %s" % name, self.pos)
        if self.src.startswith("*", self.pos):
            self.pos += 1
        elif names:
            self.fail("mixed content with element names must end in ')*'", self.pos)
        return ElementDecl(name, MIXED, mixed=frozenset(names), line=line, col=col)

    def particle(self):
        self.ws()
        if self.src.startswith("(", self.pos):
            self.pos += 1
            items = [self.particle()]
            sep = None
            while True:
                self.ws()
                ch = self.src[self.pos:self.pos + 1]
                if ch == ")":
                    self.pos += 1
                    break
                if ch not in (",", "|"):
                    self.fail("expected ',', '|' or ')' in content model", self.pos)
                if sep is not None and ch != sep:
                    self.fail("cannot mix ',' and '|' in one group", self.pos)
                sep = ch
                self.pos += 1
                items.append(self.particle())
            node = items[0] if len(items) == 1 else (Choice(tuple(items)) if sep == "|" else Seq(tuple(items)))
        else:
            node = Name(self.name())
        op = self.src[self.pos:self.pos + 1]
        if op and op in "?*+":
            self.pos += 1
            node = Repeat(node, op)
        return node

    def attlist_decl(self) -> None:
        start = self.pos
        self.skip_decl()
        body = self.src[start + len("<!ATTLIST"):self.pos - 1]
        tokens = re.findall(r"\([^)]*\)|\"[^\"]*\"|'[^']*'|\S+", body)
        if not tokens:
            self.fail("ATTLIST without element name", start)
        element, rest = tokens[0], tokens[1:]
        i = 0
        while i + 1 < len(rest):
            name, typ = rest[i], rest[i + 1]
            i += 2
            if typ == "NOTATION" and i < len(rest):
                typ += " " + rest[i]
                i += 1
            default = rest[i] if i < len(rest) else ""
            i += 1
            if default == "#FIXED" and i < len(rest):
                default += " " + rest[i]
                i += 1
            self.dtd.attlists.setdefault(element, []).append(AttributeDecl(element, name, typ, default))

    def check(self) -> None:
        for decl in self.dtd.elements.values():
            refs = model_names(decl.model) if decl.kind == CHILDREN else set(decl.mixed)
            for ref in sorted(refs - set(self.dtd.elements)):
                self.diags.append(error("DTD-UNDECLARED", "element %s refers to undeclared element %s" % (decl.name, ref), decl.line, decl.col))
            if decl.kind == CHILDREN:
                decl.automaton = ContentAutomaton(decl.model)
                if decl.automaton.conflict:
                    self.diags.append(error("DTD-AMBIGUOUS", "content model of %s is ambiguous at %s" % (decl.name, decl.automaton.conflict), decl.line, decl.col))


class _Malformed(Exception):
    pass


def parse_dtd(source: str, filename: str | None = None, line_offset: int = 0) -> DocumentTypeDefinition:
    """Parse DTD declarations; raises :class:`DiagnosticError` on errors."""
    dtd = _DtdParser(source, line_offset).parse()
    if filename is not None:
        dtd.diagnostics = [d.with_file(filename) for d in dtd.diagnostics]
    if any(d.is_error for d in dtd.diagnostics):
        raise DiagnosticError(dtd.diagnostics)
    return dtd


def _violation(path: str, el: Element, message: str) -> Diagnostic:
    return error("DTD-INVALID", "%s: %s" % (path, message), el.line, el.col)


def validate(root: Element, dtd: DocumentTypeDefinition, doctype_name: str | None = None) -> list[Diagnostic]:
    """One diagnostic per invalid element; an empty list means valid."""
    diags: list[Diagnostic] = []
    if doctype_name is not None and root.name != doctype_name:
        diags.append(_violation("/" + root.name, root, "root element is %s but DOCTYPE names %s" % (root.name, doctype_name)))
    _validate(root, "/" + root.name, dtd, diags)
    return diags


def _validate(el: Element, path: str, dtd: DocumentTypeDefinition, diags: list) -> None:
    decl = dtd.elements.get(el.name)
    kids = el.elements()
    text = "".join(c for c in el.children if isinstance(c, str))
    if decl is None:
        diags.append(error("DTD-UNKNOWN-ELEMENT", "%s: element %s is not declared" % (path, el.name), el.line, el.col))
    elif decl.kind == EMPTY:
        if el.children:
            diags.append(_violation(path, el, "declared EMPTY but has content"))
    elif decl.kind == MIXED:
        bad = [k.name for k in kids if k.name not in decl.mixed]
        if bad:
            allowed = "text only" if not decl.mixed else "text and " + ", ".join(sorted(decl.mixed))
            diags.append(_violation(path, el, "element %s not allowed here (expected %s)" % (bad[0], allowed)))
    elif decl.kind == CHILDREN:
        if text.strip():
            diags.append(_violation(path, el, "text not allowed in element content %s" % decl.describe()))
        else:
            names = [k.name for k in kids]
            idx, state = decl.automaton.run(names)
            if idx >= 0:
                diags.append(_violation(path, el, _mismatch(decl, names, idx, state)))
    for k in kids:
        _validate(k, "%s/%s" % (path, k.name), dtd, diags)


def _mismatch(decl: ElementDecl, names: list, idx: int, state) -> str:
    expected = decl.automaton.expected(state)
    want = " or ".join(expected) if expected else "no more elements"
    after = "after %s" % names[idx - 1] if idx > 0 else "as first child"
    if idx == len(names):
        return "expected %s %s, found end of content" % (want, after)
    return "expected %s %s, found %s" % (want, after, names[idx])


def resolve_dtd(doctype, base_dir=None, read=None) -> tuple[DocumentTypeDefinition | None, list[Diagnostic]]:
    """DTD for a parsed DOCTYPE: the internal subset wins over a system id."""
    if doctype is None:
        return None, []
    diags: list[Diagnostic] = []
    if doctype.internal_subset is not None:
        if doctype.system_id:
            diags.append(warning("DTD-BOTH", "DOCTYPE has both an internal subset and %s; using the internal subset" % doctype.system_id, doctype.line, doctype.col))
        dtd = parse_dtd(doctype.internal_subset, line_offset=doctype.subset_line - 1)
        return dtd, diags + dtd.diagnostics
    if doctype.system_id:
        if re.match(r"[a-zA-Z][\w+.-]*://", doctype.system_id):
            diags.append(warning("DTD-REMOTE", "not fetching remote DTD %s" % doctype.system_id, doctype.line, doctype.col))
            return None, diags
        if read is None:
            return None, diags
        text = read(doctype.system_id)
        dtd = parse_dtd(text, filename=doctype.system_id)
        return dtd, diags + dtd.diagnostics
    return None, diags
