"""Knowledge-base data model: classes, the subclass lattice, signatures and facts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Union

from framekb.diagnostics import Diagnostic, Severity, error, warning, where

OBJECT = "Object"
STRING = "STRING"


class Pos(NamedTuple):
    line: int
    col: int
    file: str | None = None


@dataclass(frozen=True, order=True)
class Oid:
    """An object identifier. Equal names denote the same object."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Lit:
    """A string literal value."""

    text: str

    def __str__(self) -> str:
        return quote(self.text)


Value = Union[Oid, Lit]


def quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_value(value: Value) -> str:
    return str(value)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    supers: frozenset = frozenset()
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class AttributeSignature:
    owner: str
    attribute: str
    value_type: str
    pos: Pos | None = field(default=None, compare=False)

    def __str__(self) -> str:
        return "%s[%s ==> %s]" % (self.owner, self.attribute, self.value_type)


@dataclass(frozen=True)
class Membership:
    obj: Oid
    cls: str
    pos: Pos | None = field(default=None, compare=False)

    def sort_key(self) -> tuple:
        return (0, self.obj.name, self.cls)

    def __str__(self) -> str:
        return "%s : %s" % (self.obj, self.cls)


@dataclass(frozen=True)
class AttributeFact:
    obj: Oid
    attribute: str
    value: Value
    pos: Pos | None = field(default=None, compare=False)

    def sort_key(self) -> tuple:
        return (1, self.obj.name, self.attribute, render_value(self.value))

    def __str__(self) -> str:
        return "%s[%s ->> %s]" % (self.obj, self.attribute, self.value)


Fact = Union[Membership, AttributeFact]


def fact_key(fact: Fact) -> tuple:
    return fact.sort_key()


class UnknownClassError(LookupError):
    pass


class KnowledgeBase:
    """Schema plus asserted facts.

    Classes and signatures are declared first; :meth:`finalize` resolves the
    lattice and checks it, after which facts may be asserted. In strict mode
    ill-typed facts are rejected, in lenient mode an unknown attribute only
    produces a warning.
    """

    def __init__(self, strict: bool = True):
        self.strict = strict
        self._supers: dict[str, set[str]] = {OBJECT: set()}
        self._decl_pos: dict[str, Pos | None] = {OBJECT: None}
        self._implicit: dict[str, Pos | None] = {}
        self._signatures: dict[tuple[str, str], list[AttributeSignature]] = {}
        self._facts: set = set()
        self._finalized = False
        self._ancestors: dict[str, frozenset] = {}
        self._effective: dict[str, dict[str, str]] = {}
        self._attr_types: dict[str, dict[str, frozenset]] = {}
        self._members: dict[Oid, set[str]] = {}

    # -- schema ---------------------------------------------------------

    @property
    def finalized(self) -> bool:
        return self._finalized

    @property
    def classes(self) -> list[str]:
        return sorted(self._supers)

    @property
    def signatures(self) -> list[AttributeSignature]:
        out = {s for sigs in self._signatures.values() for s in sigs}
        return sorted(out, key=lambda s: (s.owner, s.attribute, s.value_type))

    @property
    def attributes(self) -> set[str]:
        return {attr for _, attr in self._signatures}

    def has_class(self, name: str) -> bool:
        return name in self._supers

    def direct_superclasses(self, name: str) -> frozenset:
        self._require_class(name)
        return frozenset(self._supers[name])

    def declare_class(self, name: str, supers: Iterable[str] = (), pos: Pos | None = None) -> list[Diagnostic]:
        supers = set(supers)
        line, col, file = where(pos)
        if name == STRING:
            return [error("BUILTIN-CLASS", "STRING is a builtin type and cannot be declared", line, col, file)]
        if name == OBJECT and supers - {OBJECT}:
            return [error("CLASS-CONFLICT", "the root class Object cannot have superclasses", line, col, file)]
        if STRING in supers:
            return [error("BUILTIN-CLASS", "STRING cannot be used as a superclass", line, col, file)]
        self._finalized = False
        # Repeated declarations accumulate superclasses (multiple inheritance).
        self._supers.setdefault(name, set()).update(supers)
        self._implicit.pop(name, None)
        if self._decl_pos.get(name) is None:
            self._decl_pos[name] = pos
        return []

    def declare_signature(self, sig: AttributeSignature) -> list[Diagnostic]:
        line, col, file = where(sig.pos)
        if sig.owner == STRING:
            return [error("BUILTIN-CLASS", "STRING cannot carry attributes", line, col, file)]
        self._finalized = False
        sigs = self._signatures.setdefault((sig.owner, sig.attribute), [])
        if sig not in sigs:
            sigs.append(sig)
        if sig.owner not in self._supers:
            self._implicit.setdefault(sig.owner, sig.pos)
        return []

    def finalize(self) -> list[Diagnostic]:
        """Resolve and check the class lattice and the signatures.

        Returns all diagnostics; the KB counts as finalized only if none of
        them is an error.
        """
        diags: list[Diagnostic] = []
        referenced = {}
        for name in sorted(self._supers):
            for sup in sorted(self._supers[name]):
                referenced.setdefault(sup, self._decl_pos.get(name))
        for name, pos in sorted(referenced.items()):
            if name not in self._supers:
                self._implicit.setdefault(name, pos)
        for name, pos in sorted(self._implicit.items()):
            if name not in self._supers:
                line, col, file = where(pos)
                diags.append(warning(
                    "IMPLICIT-CLASS",
                    "class %s is used but never declared; assuming %s :: %s" % (name, name, OBJECT),
                    line, col, file))
                self._supers[name] = set()
                self._decl_pos[name] = pos
        self._implicit.clear()
        for name, sups in self._supers.items():
            if name != OBJECT and not sups:
                sups.add(OBJECT)

        diags.extend(self._check_cycles())
        self._ancestors = {name: self._closure(name) for name in self._supers}
        diags.extend(self._check_signatures())
        self._members = {}
        for fact in self._facts:
            if isinstance(fact, Membership):
                self._members.setdefault(fact.obj, set()).update(self._ancestors.get(fact.cls, {fact.cls}))
        self._finalized = not any(d.is_error for d in diags)
        return diags

    def _check_cycles(self) -> list[Diagnostic]:
        diags = []
        state: dict[str, int] = {}
        reported: set[frozenset] = set()

        def visit(node: str, path: list[str]) -> None:
            state[node] = 1
            path.append(node)
            for sup in sorted(self._supers.get(node, ())):
                if state.get(sup) == 1:
                    cycle = path[path.index(sup):]
                    key = frozenset(cycle)
                    if key not in reported:
                        reported.add(key)
                        line, col, file = where(self._decl_pos.get(cycle[0]))
                        diags.append(error(
                            "CYCLE",
                            "cyclic class hierarchy: " + " :: ".join(cycle + [sup]),
                            line, col, file))
                elif sup not in state:
                    visit(sup, path)
            path.pop()
            state[node] = 2

        for name in sorted(self._supers):
            if name not in state:
                visit(name, [])
        return diags

    def _closure(self, name: str) -> frozenset:
        seen = {name}
        stack = [name]
        while stack:
            for sup in self._supers.get(stack.pop(), ()):
                if sup not in seen:
                    seen.add(sup)
                    stack.append(sup)
        return frozenset(seen)

    def _check_signatures(self) -> list[Diagnostic]:
        diags = []
        own: dict[str, dict[str, set]] = {}
        for (owner, attr), sigs in sorted(self._signatures.items()):
            types = sorted({s.value_type for s in sigs})
            for sig in sigs:
                line, col, file = where(sig.pos)
                vt = sig.value_type
                if vt != STRING and vt not in self._supers:
                    diags.append(error("UNKNOWN-CLASS", "value type %s of %s is not a declared class" % (vt, sig), line, col, file))
                elif vt != STRING and vt != owner and owner in self._ancestors.get(vt, ()):
                    diags.append(error(
                        "SIG-SUBCLASS",
                        "value type %s of %s is a subclass of %s" % (vt, sig, owner), line, col, file))
            if len(types) > 1:
                line, col, file = where(sigs[-1].pos)
                diags.append(error(
                    "SIGNATURE-CONFLICT",
                    "%s declares %s with types %s" % (owner, attr, ", ".join(types)), line, col, file))
            own.setdefault(owner, {})[attr] = {(t, owner) for t in types}

        self._effective = {}
        self._attr_types = {}
        reported: set[frozenset] = set()
        for cls in sorted(self._supers):
            merged: dict[str, set] = {}
            for anc in self._ancestors[cls]:
                for attr, sources in own.get(anc, {}).items():
                    merged.setdefault(attr, set()).update(sources)
            eff = {}
            for attr, sources in sorted(merged.items()):
                types = {t for t, _ in sources}
                if len(types) > 1:
                    key = frozenset(sources)
                    if key not in reported:
                        reported.add(key)
                        listing = " vs ".join("%s[%s ==> %s]" % (o, attr, t) for t, o in sorted(sources, key=lambda s: (s[1], s[0])))
                        line, col, file = where(self._decl_pos.get(cls))
                        diags.append(error(
                            "SIGNATURE-CONFLICT",
                            "conflicting signatures for %s inherited by %s: %s" % (attr, cls, listing),
                            line, col, file))
                # Nearest declaration wins for lookup purposes.
                nearest = sorted(sources, key=lambda s: (s[1] != cls, len(self._ancestors[s[1]]) * -1, s[1], s[0]))
                eff[attr] = nearest[0][0]
            self._effective[cls] = eff
            self._attr_types[cls] = {attr: frozenset(t for t, _ in srcs) for attr, srcs in merged.items()}
        return diags

    def _require_finalized(self) -> None:
        if not self._finalized:
            raise RuntimeError("knowledge base is not finalized")

    def _require_class(self, name: str) -> None:
        if name not in self._supers:
            raise UnknownClassError(name)

    def is_subclass(self, sub: str, sup: str) -> bool:
        """Reflexive-transitive subclass test."""
        self._require_finalized()
        self._require_class(sub)
        self._require_class(sup)
        return sup in self._ancestors[sub]

    def ancestors(self, name: str) -> frozenset:
        self._require_finalized()
        self._require_class(name)
        return self._ancestors[name]

    def effective_signature(self, name: str) -> dict[str, str]:
        self._require_finalized()
        self._require_class(name)
        return dict(sorted(self._effective[name].items()))

    def attribute_types(self, classes: Iterable[str], attribute: str) -> frozenset:
        """All value types ``attribute`` may take for an object in ``classes``."""
        out: set[str] = set()
        for cls in classes:
            out.update(self._attr_types.get(cls, {}).get(attribute, ()))
        return frozenset(out)

    # -- facts ----------------------------------------------------------

    @property
    def facts(self) -> frozenset:
        return frozenset(self._facts)

    def classes_of(self, obj: Oid) -> frozenset:
        """Classes ``obj`` belongs to, upward closed."""
        return frozenset(self._members.get(obj, ()))

    def check_attribute(self, fact: AttributeFact, classes: Iterable[str]) -> Diagnostic | None:
        """Type-check an attribute fact for an object with the given classes."""
        line, col, file = where(fact.pos)
        types = self.attribute_types(classes, fact.attribute)
        if not types:
            if fact.attribute in self.attributes:
                msg = "no class of %s declares attribute %s" % (fact.obj, fact.attribute)
            else:
                msg = "attribute %s is not declared" % fact.attribute
            sev = Severity.ERROR if self.strict else Severity.WARNING
            return Diagnostic(sev, "UNKNOWN-ATTRIBUTE", msg, line, col, file)
        literal = isinstance(fact.value, Lit)
        if not any((t == STRING) == literal for t in types):
            expected = " or ".join(sorted(types))
            got = "a string literal" if literal else "object %s" % fact.value
            return error("VALUE-KIND", "%s expects %s but got %s" % (fact.attribute, expected, got), line, col, file)
        return None

    def check_membership(self, fact: Membership) -> Diagnostic | None:
        line, col, file = where(fact.pos)
        if fact.cls == STRING:
            return error("BUILTIN-CLASS", "objects cannot be instances of STRING", line, col, file)
        if fact.cls not in self._supers:
            return error("UNKNOWN-CLASS", "class %s is not declared" % fact.cls, line, col, file)
        return None

    def assert_fact(self, fact: Fact) -> list[Diagnostic]:
        self._require_finalized()
        if fact in self._facts:
            return []
        if isinstance(fact, Membership):
            diag = self.check_membership(fact)
        else:
            diag = self.check_attribute(fact, self.classes_of(fact.obj))
        if diag is not None and diag.is_error:
            return [diag]
        self._facts.add(fact)
        if isinstance(fact, Membership):
            self._members.setdefault(fact.obj, set()).update(self._ancestors[fact.cls])
        return [diag] if diag is not None else []

    def assert_facts(self, facts: Iterable[Fact]) -> list[Diagnostic]:
        """Assert a batch; memberships go first so attribute typing sees them."""
        facts = list(facts)
        diags = []
        for fact in sorted((f for f in facts if isinstance(f, Membership)), key=fact_key):
            diags.extend(self.assert_fact(fact))
        for fact in sorted((f for f in facts if isinstance(f, AttributeFact)), key=fact_key):
            diags.extend(self.assert_fact(fact))
        return diags
