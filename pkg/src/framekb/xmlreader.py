"""Namespace-aware XML reader with positioned diagnostics.

Supports elements, attributes, text, empty tags, comments, CDATA sections,
processing instructions and a ``<!DOCTYPE>`` prolog. Text and attribute values
have the five predefined entities, numeric character references and the
ISO-Latin-1 named entities resolved.

``recover=True`` enables a handful of repairs for hand-written annotation
markup (each repair is reported as a warning):

* a start tag that runs into the next ``<`` is closed there;
* ``<p:Name="value"/>`` is read as ``<p:Name>value</p:Name>``;
* an end tag matching an earlier self-closed sibling reopens that sibling
  and moves the elements in between into it;
* an end tag matching an element further up the stack closes the ones
  in between; any other stray end tag is dropped;
* ``implied_end`` maps a local name to the local names of open elements a
  new start tag implicitly closes;
* elements still open at the end of input are closed.
"""

from __future__ import annotations

import bisect
import html.entities
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity, error, warning

XML_NS = "http://www.w3.org/XML/1998/namespace"

PREDEFINED = {"lt": "<", "gt": ">", "amp": "&", "apos": "'", "quot": '"'}
LATIN1 = {name: chr(cp) for name, cp in html.entities.name2codepoint.items() if 160 <= cp <= 255}
ACCEPTED_ENCODINGS = {"utf-8", "utf8", "us-ascii", "ascii", "iso-8859-1", "latin-1", "latin1", "iso_8859-1"}

_NAME = r"[^\W\d][\w.\-:]*|[_:][\w.\-:]*"
_NAME_RE = re.compile(_NAME)
_ENTITY_RE = re.compile(r"&(#[0-9]+|#x[0-9a-fA-F]+|" + _NAME + r");")
_ENTITY_DECL_RE = re.compile(r"""<!ENTITY\s+(?!%)(""" + _NAME + r""")\s+(?:"([^"]*)"|'([^']*)')\s*>""")


@dataclass
class Element:
    name: str
    attrs: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)
    nsmap: dict = field(default_factory=dict, compare=False, repr=False)
    self_closing: bool = field(default=False, compare=False, repr=False)

    @property
    def prefix(self) -> str | None:
        return self.name.split(":", 1)[0] if ":" in self.name else None

    @property
    def local(self) -> str:
        return self.name.split(":", 1)[1] if ":" in self.name else self.name

    @property
    def namespace(self) -> str | None:
        return self.nsmap.get(self.prefix or "")

    def elements(self) -> list[Element]:
        return [c for c in self.children if isinstance(c, Element)]

    def text(self) -> str:
        """Concatenated direct text content."""
        return "".join(c for c in self.children if isinstance(c, str))

    def find(self, local: str) -> Element | None:
        for child in self.elements():
            if child.local == local:
                return child
        return None

    def iter(self) -> Iterator[Element]:
        yield self
        for child in self.elements():
            yield from child.iter()

    def structure(self) -> tuple:
        """Comparable shape: name, attributes in order, children."""
        kids = tuple(c if isinstance(c, str) else c.structure() for c in self.children)
        return (self.name, tuple(self.attrs.items()), kids)


Node = Union[Element, str]


@dataclass
class Doctype:
    name: str
    system_id: str | None = None
    public_id: str | None = None
    internal_subset: str | None = None
    subset_line: int = 0
    line: int = 0
    col: int = 0


@dataclass
class Document:
    root: Element | None
    doctype: Doctype | None = None
    declaration: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)


def resolve_entities(text: str, entities: dict | None = None) -> str:
    """Resolve references; unknown names are left as written."""
    def repl(m):
        ref = m.group(1)
        if ref.startswith("#x"):
            return chr(int(ref[2:], 16))
        if ref.startswith("#"):
            return chr(int(ref[1:]))
        if entities and ref in entities:
            return entities[ref]
        if ref in PREDEFINED:
            return PREDEFINED[ref]
        return LATIN1.get(ref, m.group(0))
    return _ENTITY_RE.sub(repl, text)


def escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def escape_attr(text: str) -> str:
    return escape_text(text).replace('"', "&quot;")


def internal_entities(subset: str | None) -> dict:
    if not subset:
        return {}
    out = {}
    for m in _ENTITY_DECL_RE.finditer(subset):
        out.setdefault(m.group(1), m.group(2) if m.group(2) is not None else m.group(3))
    return out


class _Stop(Exception):
    pass


class _Scanner:
    def __init__(self, source: str, start: int, end: int, *, lenient: bool, recover: bool,
                 implied_end: dict | None, nsmap: dict | None):
        self.src = source
        self.pos = start
        self.end = end
        self.lenient = lenient
        self.recover = recover
        self.implied_end = implied_end or {}
        self.base_nsmap = {"xml": XML_NS, **(nsmap or {})}
        self.diags: list[Diagnostic] = []
        self.entities: dict = {}
        self._newlines = [i for i, ch in enumerate(source) if ch == "\n"]

    # positions and reporting

    def loc(self, offset: int) -> tuple[int, int]:
        k = bisect.bisect_left(self._newlines, offset)
        line_start = self._newlines[k - 1] + 1 if k else 0
        return k + 1, offset - line_start + 1

    def err(self, code: str, message: str, offset: int) -> None:
        line, col = self.loc(offset)
        self.diags.append(error(code, message, line, col))
        raise _Stop()

    def warn(self, code: str, message: str, offset: int) -> None:
        line, col = self.loc(offset)
        self.diags.append(warning(code, message, line, col))

    def startswith(self, s: str) -> bool:
        return self.src.startswith(s, self.pos, self.end)

    def skip_ws(self) -> None:
        while self.pos < self.end and self.src[self.pos] in " \t\r\n":
            self.pos += 1

    def name(self) -> str:
        m = _NAME_RE.match(self.src, self.pos, self.end)
        if not m:
            self.err("XML-SYNTAX", "expected a name", self.pos)
        self.pos = m.end()
        return m.group()

    def quoted(self) -> tuple[str, int]:
        if self.pos >= self.end or self.src[self.pos] not in "\"'":
            self.err("XML-SYNTAX", "expected a quoted value", self.pos)
        q = self.src[self.pos]
        close = self.src.find(q, self.pos + 1, self.end)
        if close < 0:
            self.err("XML-SYNTAX", "unterminated quoted value", self.pos)
        start = self.pos + 1
        self.pos = close + 1
        return self.src[start:close], start

    def resolve(self, text: str, offset: int) -> str:
        out = []
        i = 0
        while True:
            amp = text.find("&", i)
            if amp < 0:
                out.append(text[i:])
                break
            out.append(text[i:amp])
            m = _ENTITY_RE.match(text, amp)
            if not m:
                self.report_entity("XML-ENTITY", "'&' does not start a valid reference", offset + amp)
                out.append("&")
                i = amp + 1
                continue
            ref = m.group(1)
            if ref.startswith("#"):
                try:
                    out.append(chr(int(ref[2:], 16) if ref.startswith("#x") else int(ref[1:])))
                except (ValueError, OverflowError):
                    self.report_entity("XML-ENTITY", "invalid character reference &%s;" % ref, offset + amp)
                    out.append(m.group(0))
            elif ref in self.entities:
                out.append(self.entities[ref])
            elif ref in PREDEFINED:
                out.append(PREDEFINED[ref])
            elif ref in LATIN1:
                out.append(LATIN1[ref])
            else:
                self.report_entity("XML-ENTITY", "unknown entity &%s;" % ref, offset + amp)
                out.append(m.group(0))
            i = m.end()
        return "".join(out)

    def report_entity(self, code, message, offset) -> None:
        if self.lenient:
            self.warn(code, message, offset)
        else:
            self.err(code, message, offset)

    # document

    def document(self) -> Document:
        doc = Document(None)
        try:
            self._document(doc)
        except _Stop:
            pass
        doc.diagnostics = self.diags
        return doc

    def _document(self, doc: Document) -> None:
        self.skip_ws()
        if self.startswith("<?xml") and self.src[self.pos + 5:self.pos + 6] in (" ", "\t", "\r", "\n", "?"):
            doc.declaration = self.xml_declaration()
        stack: list[Element] = []
        top: list[Node] = []
        while self.pos < self.end:
            if self.startswith("<!--"):
                self.comment()
            elif self.startswith("<![CDATA["):
                start = self.pos
                close = self.src.find("]]>", self.pos, self.end)
                if close < 0:
                    self.err("XML-SYNTAX", "unterminated CDATA section", start)
                text = self.src[self.pos + 9:close]
                self.pos = close + 3
                self.add_text(stack, top, text, start)
            elif self.startswith("<!DOCTYPE"):
                if doc.doctype is not None or stack or any(isinstance(n, Element) for n in top):
                    self.err("XML-SYNTAX", "DOCTYPE must precede the root element", self.pos)
                doc.doctype = self.doctype()
                self.entities = internal_entities(doc.doctype.internal_subset)
            elif self.startswith("<?"):
                close = self.src.find("?>", self.pos, self.end)
                if close < 0:
                    self.err("XML-SYNTAX", "unterminated processing instruction", self.pos)
                self.pos = close + 2
            elif self.startswith("</"):
                self.end_tag(stack, top)
            elif self.startswith("<"):
                self.start_tag(stack, top)
            else:
                start = self.pos
                nxt = self.src.find("<", self.pos, self.end)
                nxt = self.end if nxt < 0 else nxt
                raw = self.src[self.pos:nxt]
                self.pos = nxt
                self.add_text(stack, top, self.resolve(raw, start), start, raw)
        while stack:
            el = stack.pop()
            if self.recover:
                self.warn("XML-RECOVER", "element <%s> never closed; closed at end of input" % el.name, self.end)
            else:
                self.err("XML-UNCLOSED", "element <%s> opened at line %d is never closed" % (el.name, el.line), self.end)
        roots = [n for n in top if isinstance(n, Element)]
        if not roots:
            self.err("XML-SYNTAX", "document has no root element", self.pos)
        doc.root = roots[0]
        for extra in roots[1:]:
            offset = self._offset(extra)
            if self.recover:
                self.warn("XML-RECOVER", "ignoring element <%s> after the root element" % extra.name, offset)
            else:
                self.err("XML-SYNTAX", "content after the root element", offset)

    def _offset(self, el: Element) -> int:
        start = self._newlines[el.line - 2] + 1 if el.line > 1 else 0
        return start + el.col - 1

    def add_text(self, stack, top, text: str, offset: int, raw: str | None = None) -> None:
        if stack:
            parent = stack[-1]
            if parent.children and isinstance(parent.children[-1], str):
                parent.children[-1] += text
            elif text:
                parent.children.append(text)
        elif (raw if raw is not None else text).strip():
            self.err("XML-SYNTAX", "text outside the root element", offset)

    def xml_declaration(self) -> dict:
        start = self.pos
        close = self.src.find("?>", self.pos, self.end)
        if close < 0:
            self.err("XML-SYNTAX", "unterminated XML declaration", start)
        body = self.src[self.pos + 5:close]
        self.pos = close + 2
        decl = {m.group(1): m.group(3) for m in re.finditer(r"""(\w+)\s*=\s*(["'])(.*?)\2""", body)}
        enc = decl.get("encoding")
        if enc is not None and enc.lower() not in ACCEPTED_ENCODINGS:
            self.err("XML-ENCODING", "unsupported encoding %r (only UTF-8, ASCII and ISO-8859-1)" % enc, start)
        return decl

    def comment(self) -> None:
        close = self.src.find("-->", self.pos + 4, self.end)
        if close < 0:
            self.err("XML-SYNTAX", "unterminated comment", self.pos)
        self.pos = close + 3

    def doctype(self) -> Doctype:
        start = self.pos
        line, col = self.loc(start)
        self.pos += len("<!DOCTYPE")
        self.skip_ws()
        dt = Doctype(self.name(), line=line, col=col)
        self.skip_ws()
        if self.startswith("SYSTEM"):
            self.pos += 6
            self.skip_ws()
            dt.system_id, _ = self.quoted()
        elif self.startswith("PUBLIC"):
            self.pos += 6
            self.skip_ws()
            dt.public_id, _ = self.quoted()
            self.skip_ws()
            dt.system_id, _ = self.quoted()
        self.skip_ws()
        if self.startswith("["):
            self.pos += 1
            sub_start = self.pos
            while True:
                if self.pos >= self.end:
                    self.err("XML-SYNTAX", "unterminated DOCTYPE internal subset", start)
                ch = self.src[self.pos]
                if self.startswith("<!--"):
                    self.comment()
                elif ch in "\"'":
                    self.quoted()
                elif ch == "]":
                    break
                else:
                    self.pos += 1
            dt.internal_subset = self.src[sub_start:self.pos]
            dt.subset_line = self.loc(sub_start)[0]
            self.pos += 1
            self.skip_ws()
        if not self.startswith(">"):
            self.err("XML-SYNTAX", "expected '>' to close DOCTYPE", self.pos)
        self.pos += 1
        return dt

    def start_tag(self, stack: list, top: list) -> None:
        start = self.pos
        self.pos += 1
        name = self.name()
        line, col = self.loc(start)
        el = Element(name, line=line, col=col)
        empty = False
        while True:
            before = self.pos
            self.skip_ws()
            if self.pos >= self.end:
                self.err("XML-SYNTAX", "unterminated start tag <%s>" % name, start)
            ch = self.src[self.pos]
            if self.startswith("/>"):
                self.pos += 2
                empty = True
                break
            if ch == ">":
                self.pos += 1
                break
            if ch == "<" and self.recover:
                self.warn("XML-RECOVER", "start tag <%s> is missing '>'" % name, self.pos)
                break
            if ch == "=" and not el.attrs and self.recover:
                self.pos += 1
                self.skip_ws()
                value, voff = self.quoted()
                self.warn("XML-RECOVER", "malformed tag <%s=...>; read as element with text content" % name, start)
                el.children.append(self.resolve(value, voff))
                continue
            if self.pos == before and ch not in "\t\r\n ":
                self.err("XML-SYNTAX", "expected whitespace before attribute in <%s>" % name, self.pos)
            attr_off = self.pos
            attr = self.name()
            self.skip_ws()
            if not self.startswith("="):
                self.err("XML-SYNTAX", "attribute %s in <%s> has no value" % (attr, name), attr_off)
            self.pos += 1
            self.skip_ws()
            raw, voff = self.quoted()
            if "<" in raw:
                self.err("XML-SYNTAX", "'<' is not allowed in attribute values", voff + raw.index("<"))
            if attr in el.attrs:
                self.err("XML-SYNTAX", "duplicate attribute %s in <%s>" % (attr, name), attr_off)
            el.attrs[attr] = self.resolve(raw, voff)
        if el.children:
            empty = True

        if stack and self.implied_end:
            closes = self.implied_end.get(el.local, ())
            if stack[-1].local in closes:
                shut = stack.pop()
                self.warn("XML-RECOVER", "<%s> implicitly closes unclosed <%s> from line %d" % (name, shut.name, shut.line), start)

        parent_map = stack[-1].nsmap if stack else self.base_nsmap
        nsmap = dict(parent_map)
        for key, value in el.attrs.items():
            if key == "xmlns":
                nsmap[""] = value
            elif key.startswith("xmlns:"):
                nsmap[key[6:]] = value
        el.nsmap = nsmap
        el.self_closing = empty
        (stack[-1].children if stack else top).append(el)
        if not empty:
            stack.append(el)

    def end_tag(self, stack: list, top: list) -> None:
        start = self.pos
        self.pos += 2
        name = self.name()
        self.skip_ws()
        if not self.startswith(">"):
            self.err("XML-SYNTAX", "expected '>' in end tag </%s>" % name, self.pos)
        self.pos += 1
        if stack and stack[-1].name == name:
            stack.pop()
            return
        if not self.recover:
            if stack:
                self.err("XML-MISMATCH", "mismatched end tag </%s>; expected </%s>" % (name, stack[-1].name), start)
            self.err("XML-MISMATCH", "end tag </%s> without matching start tag" % name, start)
        siblings = stack[-1].children if stack else top
        for k in range(len(siblings) - 1, -1, -1):
            sib = siblings[k]
            if isinstance(sib, Element) and sib.name == name and sib.self_closing:
                moved = siblings[k + 1:]
                del siblings[k + 1:]
                sib.children.extend(moved)
                sib.self_closing = False
                self.warn("XML-RECOVER", "</%s> closes self-closed <%s> from line %d; its following siblings become its children" % (name, name, sib.line), start)
                return
        for k in range(len(stack) - 1, -1, -1):
            if stack[k].name == name:
                for shut in stack[k + 1:]:
                    self.warn("XML-RECOVER", "element <%s> closed implicitly by </%s>" % (shut.name, name), start)
                del stack[k:]
                return
        self.warn("XML-RECOVER", "dropping stray end tag </%s>" % name, start)


def parse_xml(source: str, *, lenient: bool = False, recover: bool = False,
              implied_end: dict | None = None, nsmap: dict | None = None,
              span: tuple[int, int] | None = None, filename: str | None = None) -> Document:
    """Parse an XML document (or the ``span`` slice of a larger text).

    Raises :class:`DiagnosticError` on any error; warnings stay on
    ``Document.diagnostics``. Positions always refer to ``source`` as a whole.
    """
    start, end = span if span is not None else (0, len(source))
    scanner = _Scanner(source, start, end, lenient=lenient, recover=recover,
                       implied_end=implied_end, nsmap=nsmap)
    doc = scanner.document()
    if filename is not None:
        doc.diagnostics = [d.with_file(filename) for d in doc.diagnostics]
    if any(d.severity is Severity.ERROR for d in doc.diagnostics):
        raise DiagnosticError(doc.diagnostics)
    return doc


_RDF_OPEN_RE = re.compile(r"<((?:[\w.\-]+:)?rdf)(?=[\s/>])", re.IGNORECASE)
_XMLNS_RE = re.compile(r"""\sxmlns:([\w.\-]+)\s*=\s*(["'])(.*?)\2""", re.DOTALL)


def find_rdf_blocks(source: str) -> list[tuple[int, int]]:
    """Spans of ``rdf`` root elements embedded in an HTML (or other) host text."""
    spans = []
    pos = 0
    while True:
        m = _RDF_OPEN_RE.search(source, pos)
        if not m:
            return spans
        close_re = re.compile(r"</" + re.escape(m.group(1)) + r"\s*>", re.IGNORECASE)
        tag_end = source.find(">", m.end())
        if tag_end > 0 and source[tag_end - 1] == "/":
            spans.append((m.start(), tag_end + 1))
            pos = tag_end + 1
            continue
        c = close_re.search(source, m.end())
        end = c.end() if c else len(source)
        spans.append((m.start(), end))
        pos = end


def host_namespaces(source: str, before: int) -> dict:
    """``xmlns:`` declarations appearing in the host text ahead of ``before``."""
    return {m.group(1): m.group(3) for m in _XMLNS_RE.finditer(source, 0, before)}


def serialize(node: Node) -> str:
    if isinstance(node, str):
        return escape_text(node)
    attrs = "".join(' %s="%s"' % (k, escape_attr(v)) for k, v in node.attrs.items())
    if not node.children:
        return "<%s%s/>" % (node.name, attrs)
    inner = "".join(serialize(c) for c in node.children)
    return "<%s%s>%s</%s>" % (node.name, attrs, inner, node.name)
