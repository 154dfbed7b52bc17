"""RDF/XML statement extraction, namespace versions and mapping onto ontology facts.

Both the serialization syntax (property elements) and the abbreviated
syntax (properties as attributes of a description) are read. The ``rdf``
prefix is recognized by name even when it is undeclared or bound to a
slightly mangled URI, because hand-written annotations often get that
wrong.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Union

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity, error, warning
from framekb.ontology import AttributeFact, KnowledgeBase, Lit, Membership, Oid, Pos, fact_key
from framekb.xmlreader import Element

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
XMLNS_PREFIXES = ("xmlns", "xml")

CONTAINER_KINDS = {"Bag": "Bag", "Seq": "Sequence", "Sequence": "Sequence", "Alt": "Alternative"}
_NODE_ATTRS = {"about", "ID", "aboutEach", "bagID"}
_RESOURCE_ATTRS = ("resource", "ressource")
_RDF_TERMS = {"RDF", "Description", "li", "type", "parseType", "value"} | set(CONTAINER_KINDS) | _NODE_ATTRS | set(_RESOURCE_ATTRS)
_VERSION_RE = re.compile(r"#v(\d+)$")
RECOVERY_IMPLIED_END = {"Description": {"Description"}}


def namespace_base(uri: str) -> str:
    """Namespace URI with whitespace and any fragment removed."""
    uri = re.sub(r"\s+", "", uri)
    return uri.split("#", 1)[0]


@dataclass(frozen=True)
class NamespaceBinding:
    prefix: str
    uri: str
    version: int | None = None

    @property
    def base(self) -> str:
        return namespace_base(self.uri)

    @classmethod
    def parse(cls, prefix: str, uri: str) -> NamespaceBinding:
        m = _VERSION_RE.search(uri.strip())
        return cls(prefix, uri, int(m.group(1)) if m else None)


@dataclass(frozen=True, order=True)
class Property:
    namespace: str | None
    local: str
    prefix: str | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple:
        return (self.namespace, self.local)

    def __str__(self) -> str:
        return "%s:%s" % (self.prefix, self.local) if self.prefix else self.local


@dataclass(frozen=True, order=True)
class Resource:
    id: str

    @property
    def anonymous(self) -> bool:
        return self.id.startswith("_:")

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True, order=True)
class Literal:
    text: str

    def __str__(self) -> str:
        return '"%s"' % self.text


@dataclass(frozen=True, order=True)
class ContainerRef:
    id: str

    def __str__(self) -> str:
        return self.id


Node = Union[Resource, Literal, ContainerRef]


@dataclass(frozen=True)
class RdfStatement:
    subject: Resource
    property: Property
    object: Node
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return "(%s, %s, %s)" % (self.subject, self.property, self.object)


@dataclass(frozen=True)
class Container:
    id: str
    kind: str
    members: tuple

    def __str__(self) -> str:
        return "%s[%s]" % (self.kind, ", ".join(map(str, self.members)))


@dataclass
class RdfGraph:
    statements: list = field(default_factory=list)
    containers: dict = field(default_factory=dict)
    bindings: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def describe(self, stmt: RdfStatement) -> str:
        obj = stmt.object
        if isinstance(obj, ContainerRef) and obj.id in self.containers:
            obj = self.containers[obj.id]
        return "(%s, %s, %s)" % (stmt.subject, stmt.property, obj)


def _is_rdf_root(el: Element) -> bool:
    return el.local.lower() == "rdf"


def find_rdf_roots(root: Element) -> list[Element]:
    if _is_rdf_root(root):
        return [root]
    found = []
    for child in root.elements():
        found.extend(find_rdf_roots(child))
    return found


class _Extractor:
    def __init__(self, prefixes: dict, strict: bool, doc_id: str | None):
        self.prefixes = prefixes
        self.strict = strict
        self.doc_id = doc_id
        self.counter = 0
        self.graph = RdfGraph()
        self.schema_ns: str | None = None
        self.reported: set = set()

    def fresh(self, kind: str) -> str:
        self.counter += 1
        return "_:%s%s%d" % (self.doc_id + "." if self.doc_id else "", kind, self.counter)

    def diag(self, sev: Severity, code: str, message: str, el: Element) -> None:
        self.graph.diagnostics.append(Diagnostic(sev, code, message, el.line, el.col))

    def problem(self, code: str, message: str, el: Element) -> None:
        self.diag(Severity.ERROR if self.strict else Severity.WARNING, code, message, el)

    # namespaces

    def is_rdf(self, el: Element, name: str | None = None) -> bool:
        name = name or el.name
        prefix = name.split(":", 1)[0] if ":" in name else ""
        uri = el.nsmap.get(prefix)
        if uri is not None and namespace_base(uri) == namespace_base(RDF_NS):
            return True
        return prefix.lower() == "rdf"

    def property_of(self, el: Element, name: str) -> Property | None:
        prefix, local = name.split(":", 1) if ":" in name else ("", name)
        if not prefix and local in _RDF_TERMS:
            return None
        if self.is_rdf(el, name):
            if local in _RDF_TERMS:
                return None
            if self.schema_ns is None:
                self.problem("RDF-PREFIX", "property %s uses the rdf prefix and no schema namespace is declared" % name, el)
                return Property(None, local, prefix)
            self.diag(Severity.WARNING, "RDF-PREFIX", "property %s uses the rdf prefix; read as %s#%s" % (name, self.schema_ns, local), el)
            return Property(self.schema_ns, local, prefix)
        uri = el.nsmap.get(prefix)
        if uri is None:
            uri = self.prefixes.get(prefix)
        if uri is None:
            if prefix not in self.reported:
                self.reported.add(prefix)
                what = "prefix %s" % prefix if prefix else "unprefixed name %s (no default namespace)" % name
                self.problem("RDF-UNBOUND-PREFIX", "unresolvable %s" % what, el)
            return Property(None, local, prefix or None)
        return Property(namespace_base(uri), local, prefix or None)

    def rdf_attr(self, el: Element, local: str) -> tuple[str, str] | None:
        for key, value in el.attrs.items():
            k = key.split(":", 1)[1] if ":" in key else key
            if k == local and (":" not in key or self.is_rdf(el, key)):
                return key, value
        return None

    def collect_bindings(self, rdf_root: Element) -> None:
        seen = {}
        for prefix, uri in sorted(self.prefixes.items()):
            seen[prefix] = NamespaceBinding.parse(prefix, uri)
        for el in rdf_root.iter():
            for key, value in el.attrs.items():
                if key.startswith("xmlns:"):
                    seen[key[6:]] = NamespaceBinding.parse(key[6:], value)
                    if re.search(r"\s", value):
                        self.diag(Severity.WARNING, "RDF-NAMESPACE", "namespace URI for %s contains whitespace: %r" % (key[6:], value), el)
        for prefix, uri in rdf_root.nsmap.items():
            if prefix not in seen and prefix not in ("", "xml"):
                seen[prefix] = NamespaceBinding.parse(prefix, uri)
        self.graph.bindings.extend(seen[p] for p in sorted(seen))
        schema = {b.base for b in seen.values()
                  if b.prefix.lower() != "rdf" and b.base != namespace_base(RDF_NS)}
        self.schema_ns = schema.pop() if len(schema) == 1 else None

    # structure

    def rdf_block(self, rdf_root: Element) -> None:
        self.collect_bindings(rdf_root)
        for child in rdf_root.elements():
            self.node(child, top=True)
        for child in rdf_root.children:
            if isinstance(child, str) and child.strip():
                self.problem("RDF-STRAY-TEXT", "text directly inside the rdf element: %r" % child.strip(), rdf_root)

    def subject_of(self, el: Element) -> Resource:
        about = self.rdf_attr(el, "about") or self.rdf_attr(el, "ID")
        return Resource(about[1]) if about else Resource(self.fresh("b"))

    def node(self, el: Element, top: bool = False) -> Node | None:
        """A node element: a description, a container or a typed node."""
        local = el.local
        if self.is_rdf(el) and local in CONTAINER_KINDS:
            return self.container(el)
        if self.is_rdf(el) and local == "li":
            self.problem("RDF-LI", "li outside a container", el)
            return None
        if self.is_rdf(el) and local != "Description":
            self.problem("RDF-NODE", "unexpected rdf element %s" % el.name, el)
            return None
        if not self.is_rdf(el) and top and not (self.rdf_attr(el, "about") or self.rdf_attr(el, "ID")):
            self.problem("RDF-PROPERTY-OUTSIDE", "property element %s outside a Description" % el.name, el)
            return None
        subject = self.subject_of(el)
        if not self.is_rdf(el):
            prop = self.property_of(el, el.name)
            if prop is not None and prop.namespace is not None:
                self.diag(Severity.WARNING, "RDF-TYPED-NODE", "typed node %s read as a Description" % el.name, el)
        for key, value in el.attrs.items():
            if key == "xmlns" or key.startswith("xmlns:"):
                continue
            prop = self.property_of(el, key)
            if prop is None:
                continue
            self.emit(subject, prop, Literal(value.strip()), el)
        for child in el.elements():
            self.property(subject, child)
        if el.text().strip():
            self.problem("RDF-STRAY-TEXT", "text directly inside a Description: %r" % el.text().strip(), el)
        return subject

    def emit(self, subject, prop, obj, el) -> None:
        self.graph.statements.append(RdfStatement(subject, prop, obj, el.line, el.col))

    def resource_attr(self, el: Element) -> Resource | None:
        for spelling in _RESOURCE_ATTRS:
            hit = self.rdf_attr(el, spelling)
            if hit:
                if spelling == "ressource":
                    self.diag(Severity.WARNING, "RDF-RESSOURCE", "attribute %s read as resource" % hit[0], el)
                return Resource(hit[1])
        return None

    def value_of(self, el: Element) -> Node | None:
        """Object of a property element or container member."""
        res = self.resource_attr(el)
        kids = el.elements()
        text = el.text().strip()
        if res is not None:
            if kids or text:
                self.problem("RDF-CONTENT", "%s has a resource attribute and content" % el.name, el)
            return res
        if kids:
            if text:
                self.problem("RDF-CONTENT", "%s mixes text and elements" % el.name, el)
            if len(kids) > 1:
                self.problem("RDF-CONTENT", "%s has more than one value element" % el.name, el)
            return self.node(kids[0])
        extra = [(k, v) for k, v in el.attrs.items()
                 if not k.startswith("xmlns") and not self.is_rdf(el, k) and k not in _RDF_TERMS]
        if extra:
            subject = Resource(self.fresh("b"))
            for key, value in extra:
                prop = self.property_of(el, key)
                if prop is not None:
                    self.emit(subject, prop, Literal(value.strip()), el)
            return subject
        return Literal(text)

    def property(self, subject: Resource, el: Element) -> None:
        if self.is_rdf(el) and el.local == "li":
            self.problem("RDF-LI", "li outside a container", el)
            return
        prop = self.property_of(el, el.name)
        if prop is None:
            self.problem("RDF-PROPERTY", "rdf:%s cannot be used as a property" % el.local, el)
            return
        obj = self.value_of(el)
        if obj is not None:
            self.emit(subject, prop, obj, el)

    def container(self, el: Element) -> ContainerRef:
        kind = CONTAINER_KINDS[el.local]
        about = self.rdf_attr(el, "about") or self.rdf_attr(el, "ID")
        cid = about[1] if about else self.fresh("c")
        members = []
        for child in el.elements():
            if self.is_rdf(child) and (child.local == "li" or re.fullmatch(r"_\d+", child.local)):
                member = self.value_of(child)
                if isinstance(member, ContainerRef):
                    self.problem("RDF-CONTAINER", "nested containers are not supported", child)
                elif member is not None:
                    members.append(member)
            else:
                self.problem("RDF-CONTAINER", "%s inside %s is not a container member" % (child.name, el.name), child)
        if kind == "Alternative" and not members:
            self.problem("RDF-CONTAINER", "an Alt container needs at least one member", el)
        self.graph.containers[cid] = Container(cid, kind, tuple(members))
        return ContainerRef(cid)


def extract_statements(tree: Element, prefixes: dict | None = None, strict: bool = True,
                       doc_id: str | None = None) -> RdfGraph:
    """Statements and containers of every ``rdf`` block in ``tree``.

    ``prefixes`` supplies bindings for prefixes the document uses without
    declaring them. Raises :class:`DiagnosticError` on errors.
    """
    ex = _Extractor(dict(prefixes or {}), strict, doc_id)
    roots = find_rdf_roots(tree)
    if not roots:
        ex.graph.diagnostics.append(warning("RDF-NONE", "document contains no rdf element", tree.line, tree.col))
    for root in roots:
        ex.rdf_block(root)
    if any(d.is_error for d in ex.graph.diagnostics):
        raise DiagnosticError(ex.graph.diagnostics)
    return ex.graph


# equivalence

def _anon_ids(graph: RdfGraph) -> list[str]:
    ids = set()
    for s in graph.statements:
        for node in (s.subject, s.object):
            if isinstance(node, Resource) and node.anonymous:
                ids.add(node.id)
    for c in graph.containers.values():
        ids.update(m.id for m in c.members if isinstance(m, Resource) and m.anonymous)
    return sorted(ids)


def _canon(node, graph: RdfGraph, rename: dict):
    if isinstance(node, Literal):
        return ("L", node.text)
    if isinstance(node, Resource):
        return ("R", rename.get(node.id, node.id))
    c = graph.containers.get(node.id)
    if c is None:
        return ("C?", node.id)
    members = [_canon(m, graph, rename) for m in c.members]
    if c.kind == "Bag":
        members.sort()
    name = None if node.id.startswith("_:") else node.id
    return ("C", c.kind, name, tuple(members))


def _canon_set(graph: RdfGraph, rename: dict) -> frozenset:
    return frozenset((_canon(s.subject, graph, rename), s.property.key, _canon(s.object, graph, rename))
                     for s in graph.statements)


def _degree(graph: RdfGraph) -> dict:
    deg: dict = {}
    for s in graph.statements:
        for role, node in (("s", s.subject), ("o", s.object)):
            if isinstance(node, Resource) and node.anonymous:
                deg.setdefault(node.id, Counter())[(role, s.property.key)] += 1
    return {k: tuple(sorted(v.items())) for k, v in deg.items()}


def equivalent_statement_sets(a: RdfGraph, b: RdfGraph) -> bool:
    """Equal up to renaming of anonymous ids and the order of Bag members."""
    ids_a, ids_b = _anon_ids(a), _anon_ids(b)
    if len(ids_a) != len(ids_b):
        return False
    target = _canon_set(b, {})
    if not ids_a:
        return _canon_set(a, {}) == target
    deg_a, deg_b = _degree(a), _degree(b)
    used: set = set()
    rename: dict = {}

    def search(i: int) -> bool:
        if i == len(ids_a):
            return _canon_set(a, rename) == target
        for cand in ids_b:
            if cand in used or deg_a.get(ids_a[i]) != deg_b.get(cand):
                continue
            used.add(cand)
            rename[ids_a[i]] = cand
            if search(i + 1):
                return True
            used.discard(cand)
            del rename[ids_a[i]]
        return False

    return search(0)


# mapping

@dataclass(frozen=True)
class MappingEntry:
    namespace: str
    local: str
    attribute: str
    domain: str
    line: int = field(default=0, compare=False)


@dataclass
class MappingConfig:
    """Sidecar mapping of RDF properties onto ontology attributes.

    One entry per line, ``<namespace-uri>#<local> -> Attribute @ DomainClass``.
    ``prefix p = <uri>`` lines bind prefixes that documents use without
    declaring them. Blank lines and lines starting with ``#`` are ignored.
    """

    entries: dict = field(default_factory=dict)
    prefixes: dict = field(default_factory=dict)

    _ENTRY = re.compile(r"^(\S+)#([^\s#]+)\s*->\s*([^\W\d]\w*)\s*@\s*([^\W\d]\w*)$")
    _PREFIX = re.compile(r"^prefix\s+([\w.\-]+)\s*=\s*(\S+)$")

    @classmethod
    def parse(cls, text: str, filename: str | None = None) -> MappingConfig:
        cfg = cls()
        diags = []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            m = cls._ENTRY.match(line)
            if m:
                entry = MappingEntry(namespace_base(m.group(1)), m.group(2), m.group(3), m.group(4), n)
                key = (entry.namespace, entry.local)
                if key in cfg.entries and cfg.entries[key] != entry:
                    diags.append(error("MAPPING-CONFLICT", "%s#%s is mapped twice" % key, n, 1, filename))
                cfg.entries[key] = entry
                continue
            m = cls._PREFIX.match(line)
            if m:
                cfg.prefixes[m.group(1)] = m.group(2)
                continue
            diags.append(error("MAPPING-SYNTAX", "expected '<uri>#<name> -> Attribute @ Class' or 'prefix p = <uri>'", n, 1, filename))
        if diags:
            raise DiagnosticError(diags)
        return cfg

    @property
    def namespaces(self) -> set[str]:
        return {e.namespace for e in self.entries.values()}

    def lookup(self, prop: Property) -> MappingEntry | None:
        return self.entries.get(prop.key)


@dataclass
class MappingResult:
    facts: list
    diagnostics: list


def _pos(stmt: RdfStatement) -> Pos:
    return Pos(stmt.line, stmt.col)


def map_to_facts(graph: RdfGraph, kb: KnowledgeBase, config: MappingConfig,
                 strict: bool | None = None, expand_alternatives: bool = False) -> MappingResult:
    """Ontology facts for the statements of ``graph``.

    Every subject gets a membership in the domain class of each mapped
    property it carries. Container values expand to one fact per member
    (only the first member of an Alternative unless ``expand_alternatives``).
    Raises :class:`DiagnosticError` on errors.
    """
    if strict is None:
        strict = kb.strict
    sev = Severity.ERROR if strict else Severity.WARNING
    diags: list[Diagnostic] = []
    facts: dict = {}
    pending = []
    for stmt in graph.statements:
        entry = config.lookup(stmt.property)
        pos = _pos(stmt)
        if entry is None:
            where = "%s#%s" % stmt.property.key if stmt.property.namespace else str(stmt.property)
            diags.append(Diagnostic(sev, "UNMAPPED-PROPERTY", "no mapping for property %s" % where, stmt.line, stmt.col))
            continue
        if not kb.has_class(entry.domain):
            diags.append(error("UNKNOWN-CLASS", "mapping names undeclared class %s" % entry.domain, stmt.line, stmt.col))
            continue
        subject = Oid(stmt.subject.id)
        facts.setdefault(Membership(subject, entry.domain), pos)
        obj = stmt.object
        if isinstance(obj, ContainerRef):
            c = graph.containers[obj.id]
            values = c.members[:1] if c.kind == "Alternative" and not expand_alternatives else c.members
        else:
            values = (obj,)
        for v in values:
            value = Lit(v.text) if isinstance(v, Literal) else Oid(v.id)
            pending.append((AttributeFact(subject, entry.attribute, value, pos), stmt))

    classes: dict = {}
    for m in facts:
        classes.setdefault(m.obj, set()).update(kb.ancestors(m.cls))
    for fact, stmt in pending:
        known = set(kb.classes_of(fact.obj)) | classes.get(fact.obj, set())
        diag = kb.check_attribute(fact, known)
        if diag is not None:
            diag = Diagnostic(Severity.ERROR if strict else Severity.WARNING, diag.code,
                              "%s: %s" % (graph.describe(stmt), diag.message), stmt.line, stmt.col)
            diags.append(diag)
            if strict:
                continue
        facts.setdefault(fact, fact.pos)
    if any(d.is_error for d in diags):
        raise DiagnosticError(diags)
    out = sorted((Membership(f.obj, f.cls, p) if isinstance(f, Membership) else f for f, p in facts.items()), key=fact_key)
    return MappingResult(out, diags)


def check_version(bindings, expected: int, namespaces=None) -> list[Diagnostic]:
    """Compare version-tagged namespace bindings with the ontology version.

    Older versions warn; newer versions are errors. With ``namespaces``
    only bindings whose base is in that set are considered.
    """
    diags = []
    for b in bindings:
        if b.version is None or (namespaces is not None and b.base not in namespaces):
            continue
        if b.version < expected:
            diags.append(warning("VERSION-OLD", "namespace %s is at ontology version v%d, current is v%d; "
                                 "facts are read with the current schema, re-annotate to migrate" % (b.uri, b.version, expected)))
        elif b.version > expected:
            diags.append(error("VERSION-NEWER", "namespace %s is at ontology version v%d but the knowledge base is at v%d; "
                               "documents may only target the current version" % (b.uri, b.version, expected)))
    return diags
