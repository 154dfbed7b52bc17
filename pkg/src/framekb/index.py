"""Indexed fact storage and single-atom matching."""

from __future__ import annotations

from typing import Iterable, Iterator

from framekb.flogic import AttrAtom, MemberAtom, Var
from framekb.ontology import AttributeFact, Lit, Membership, Oid


def value_key(value) -> tuple:
    return (0, value.name) if isinstance(value, Oid) else (1, value.text)


class FactIndex:
    """Facts indexed by class, by attribute and by (attribute, subject/value)."""

    def __init__(self, facts: Iterable = ()):
        self.facts: set = set()
        self.members: dict[str, set[Oid]] = {}
        self.classes: dict[Oid, set[str]] = {}
        self.by_attr: dict[str, set[tuple]] = {}
        self.by_subject: dict[tuple, set] = {}
        self.by_value: dict[tuple, set] = {}
        for fact in facts:
            self.add(fact)

    def add(self, fact) -> bool:
        if fact in self.facts:
            return False
        self.facts.add(fact)
        if isinstance(fact, Membership):
            self.members.setdefault(fact.cls, set()).add(fact.obj)
            self.classes.setdefault(fact.obj, set()).add(fact.cls)
        else:
            self.by_attr.setdefault(fact.attribute, set()).add((fact.obj, fact.value))
            self.by_subject.setdefault((fact.attribute, fact.obj), set()).add(fact.value)
            self.by_value.setdefault((fact.attribute, fact.value), set()).add(fact.obj)
        return True

    def __contains__(self, fact) -> bool:
        return fact in self.facts

    def __len__(self) -> int:
        return len(self.facts)

    def values(self) -> set:
        """Every object and literal mentioned by a fact."""
        out: set = set()
        for fact in self.facts:
            out.add(fact.obj)
            if isinstance(fact, AttributeFact):
                out.add(fact.value)
        return out

    def match(self, atom, binding: dict) -> Iterator[dict]:
        """Yield every extension of ``binding`` under which ``atom`` holds."""
        if isinstance(atom, MemberAtom):
            yield from self._match_member(atom, binding)
        else:
            yield from self._match_attr(atom, binding)

    def _match_member(self, atom: MemberAtom, binding: dict) -> Iterator[dict]:
        objs = self.members.get(atom.cls)
        if not objs:
            return
        term = resolve(atom.term, binding)
        if isinstance(term, Var):
            for obj in sorted(objs):
                yield {**binding, term.name: obj}
        elif term in objs:
            yield binding

    def _match_attr(self, atom: AttrAtom, binding: dict) -> Iterator[dict]:
        subj = resolve(atom.subject, binding)
        val = resolve(atom.value, binding)
        if isinstance(subj, Lit):
            return
        if not isinstance(subj, Var):
            vals = self.by_subject.get((atom.attribute, subj))
            if not vals:
                return
            if not isinstance(val, Var):
                if val in vals:
                    yield binding
                return
            for v in sorted(vals, key=value_key):
                yield {**binding, val.name: v}
            return
        if not isinstance(val, Var):
            for s in sorted(self.by_value.get((atom.attribute, val), ())):
                yield {**binding, subj.name: s}
            return
        pairs = self.by_attr.get(atom.attribute, ())
        same = subj.name == val.name
        for s, v in sorted(pairs, key=lambda p: (p[0].name, value_key(p[1]))):
            if same:
                if s == v:
                    yield {**binding, subj.name: s}
            else:
                yield {**binding, subj.name: s, val.name: v}

    def estimate(self, atom, bound: set[str]) -> int:
        """Rough candidate count for join ordering."""
        def is_bound(t):
            return not isinstance(t, Var) or t.name in bound

        if isinstance(atom, MemberAtom):
            return 1 if is_bound(atom.term) else len(self.members.get(atom.cls, ()))
        if is_bound(atom.subject) or is_bound(atom.value):
            return 1
        return len(self.by_attr.get(atom.attribute, ()))


def resolve(term, binding: dict):
    if isinstance(term, Var) and term.name in binding:
        return binding[term.name]
    return term


def instantiate(atom, binding: dict):
    """Ground an atom into a fact, or ``None`` if it cannot be a fact."""
    if isinstance(atom, MemberAtom):
        obj = resolve(atom.term, binding)
        if not isinstance(obj, Oid):
            return None
        return Membership(obj, atom.cls)
    subj = resolve(atom.subject, binding)
    val = resolve(atom.value, binding)
    if not isinstance(subj, Oid) or isinstance(val, Var):
        return None
    return AttributeFact(subj, atom.attribute, val)
