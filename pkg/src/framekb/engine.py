"""Rule compilation and semi-naive forward chaining to the least fixpoint."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity, error, warning, where
from framekb.flogic import EQUIVALENCE, AttrAtom, MemberAtom, Program, Rule, Var, atom_variables
from framekb.index import FactIndex, instantiate
from framekb.ontology import AttributeFact, KnowledgeBase, Membership, fact_key

logger = logging.getLogger(__name__)

SUBCLASS = "subclass"


class SaturationOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class CompiledRule:
    label: str
    body: tuple
    head: tuple
    origin: Rule

    def __str__(self) -> str:
        return "%s: %s -> %s" % (
            self.label, " and ".join(map(str, self.body)), " and ".join(map(str, self.head)))


@dataclass
class RuleSet:
    rules: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)


def _rule_key(head) -> str:
    for atom in head:
        if isinstance(atom, AttrAtom):
            return atom.attribute
    return head[0].cls


def compile_rules(rules: Program | Iterable[Rule], kb: KnowledgeBase | None = None,
                  strict: bool | None = None) -> RuleSet:
    """Split equivalences into two implications and check heads against the schema.

    With a KB, head classes and attributes must be declared: an error in
    strict mode, a warning otherwise.
    """
    if isinstance(rules, Program):
        rules = rules.rules
    if strict is None:
        strict = kb.strict if kb is not None else True
    diags: list[Diagnostic] = []
    compiled: list[CompiledRule] = []
    for rule in rules:
        line, col, file = where(rule.pos)
        bv, hv = atom_variables(rule.body), atom_variables(rule.head)
        unsafe = hv - bv if rule.kind != EQUIVALENCE else (hv ^ bv)
        if unsafe:
            diags.append(error("UNSAFE-RULE", "variable(s) %s are not range-restricted" % ", ".join(sorted(unsafe)), line, col, file))
            continue
        if kb is not None:
            sides = (rule.head, rule.body) if rule.kind == EQUIVALENCE else (rule.head,)
            for side in sides:
                for atom in side:
                    diags.extend(_check_head_atom(atom, kb, strict))
        if rule.kind == EQUIVALENCE:
            pairs = [(rule.body, rule.head, " (forward)"), (rule.head, rule.body, " (backward)")]
        else:
            pairs = [(rule.body, rule.head, "")]
        for body, head, suffix in pairs:
            compiled.append(CompiledRule("%s-%s%s" % (_rule_key(head), rule.kind, suffix), tuple(body), tuple(head), rule))

    seen: dict[str, int] = {}
    for i, cr in enumerate(compiled):
        n = seen.get(cr.label, 0) + 1
        seen[cr.label] = n
        if n > 1:
            compiled[i] = CompiledRule("%s #%d" % (cr.label, n), cr.body, cr.head, cr.origin)
    if any(d.is_error for d in diags):
        raise DiagnosticError(diags)
    return RuleSet(compiled, diags)


def _check_head_atom(atom, kb: KnowledgeBase, strict: bool) -> list[Diagnostic]:
    line, col, file = where(atom.pos)
    sev = Severity.ERROR if strict else Severity.WARNING
    if isinstance(atom, MemberAtom):
        if not kb.has_class(atom.cls):
            return [Diagnostic(sev, "UNKNOWN-CLASS", "rule head uses undeclared class %s" % atom.cls, line, col, file)]
    elif atom.attribute not in kb.attributes:
        return [Diagnostic(sev, "UNKNOWN-ATTRIBUTE", "rule head uses undeclared attribute %s" % atom.attribute, line, col, file)]
    return []


@dataclass(frozen=True)
class Derivation:
    """First derivation of a fact: the rule, its binding and the ground body."""

    rule: str
    binding: tuple
    premises: tuple
    round: int

    def binding_dict(self) -> dict:
        return dict(self.binding)


class SaturatedKB:
    """A knowledge base together with everything its rules derive."""

    def __init__(self, base: KnowledgeBase, rules: RuleSet, derived: frozenset,
                 provenance: dict, diagnostics: list):
        self.base = base
        self.rules = rules
        self.derived = derived
        self.provenance = provenance
        self.diagnostics = diagnostics
        self.index = FactIndex(base.facts | derived)

    @property
    def facts(self) -> frozenset:
        return frozenset(self.index.facts)

    def __contains__(self, fact) -> bool:
        return fact in self.index

    def sorted_facts(self) -> list:
        return sorted(self.index.facts, key=fact_key)


def _fact_bound(values: int, attributes: int, classes: int) -> int:
    return values * values * attributes + values * classes


def _join(body, i, old: FactIndex, delta: FactIndex, full: FactIndex):
    """Semi-naive join: atom ``i`` over delta, earlier atoms over old, later over full."""
    order = [i]
    rest = [j for j in range(len(body)) if j != i]
    bound = set(body[i].variables())
    while rest:
        def cost(j):
            src = old if j < i else full
            return (src.estimate(body[j], bound), j)
        best = min(rest, key=cost)
        rest.remove(best)
        order.append(best)
        bound |= body[best].variables()

    def step(k, binding):
        if k == len(order):
            yield binding
            return
        j = order[k]
        src = delta if j == i else (old if j < i else full)
        for ext in src.match(body[j], binding):
            yield from step(k + 1, ext)

    yield from step(0, {})


def _fixpoint(kb: KnowledgeBase, rules: RuleSet, blocked: set, max_rounds: int | None):
    base = sorted(kb.facts, key=fact_key)
    full = FactIndex(base)
    old = FactIndex()
    delta = list(base)
    provenance: dict = {}
    malformed: dict = {}

    values = full.values()
    attrs = set(full.by_attr)
    classes = set(kb.classes)
    for cr in rules:
        for atom in cr.head + cr.body:
            if isinstance(atom, MemberAtom):
                classes.add(atom.cls)
                terms = (atom.term,)
            else:
                attrs.add(atom.attribute)
                terms = (atom.subject, atom.value)
            values.update(t for t in terms if not isinstance(t, Var))
    cap = _fact_bound(len(values), len(attrs), len(classes)) + 2
    if max_rounds is not None:
        cap = min(cap, max_rounds)

    rnd = 0
    while delta:
        rnd += 1
        if rnd > cap:
            raise SaturationOverflow("saturation did not converge within %d rounds" % cap)
        dindex = FactIndex(delta)
        new: dict = {}

        def offer(fact, derivation):
            if fact not in full and fact not in new and fact not in blocked:
                new[fact] = derivation

        for fact in delta:
            if isinstance(fact, Membership) and kb.has_class(fact.cls):
                for sup in sorted(kb.ancestors(fact.cls) - {fact.cls}):
                    offer(Membership(fact.obj, sup), Derivation(SUBCLASS, (), (fact,), rnd))
        for cr in rules:
            for i, atom in enumerate(cr.body):
                if isinstance(atom, MemberAtom):
                    if atom.cls not in dindex.members:
                        continue
                elif atom.attribute not in dindex.by_attr:
                    continue
                for binding in _join(cr.body, i, old, dindex, full):
                    premises = tuple(instantiate(a, binding) for a in cr.body)
                    frozen = tuple(sorted(binding.items()))
                    for head_atom in cr.head:
                        fact = instantiate(head_atom, binding)
                        if fact is None:
                            malformed.setdefault((cr.label, str(head_atom)), frozen)
                            continue
                        offer(fact, Derivation(cr.label, frozen, premises, rnd))
        for fact in delta:
            old.add(fact)
        for fact in sorted(new, key=fact_key):
            full.add(fact)
        provenance.update(new)
        delta = sorted(new, key=fact_key)
        logger.debug("round %d: %d new facts", rnd, len(new))
    return full, provenance, malformed


def _format_binding(binding: tuple) -> str:
    return "{" + ", ".join("%s=%s" % (k, v) for k, v in binding) + "}"


def saturate(kb: KnowledgeBase, rules: RuleSet, max_rounds: int | None = None) -> SaturatedKB:
    """Compute the least fixpoint of ``rules`` plus subclass upward closure.

    In strict mode derived facts that do not type-check are dropped (and
    anything depending only on them is never derived); in lenient mode they
    are kept. Either way each one yields a diagnostic naming rule and binding.
    """
    if not kb.finalized:
        raise RuntimeError("knowledge base is not finalized")
    blocked: set = set()
    while True:
        full, provenance, malformed = _fixpoint(kb, rules, blocked, max_rounds)
        bad = _ill_typed(kb, full, provenance)
        if not kb.strict or not bad:
            break
        blocked.update(f for f, _ in bad)

    diags: list[Diagnostic] = []
    for (label, atom), binding in sorted(malformed.items()):
        diags.append(warning("ILL-FORMED-DERIVATION", "rule %s cannot instantiate %s under %s" % (label, atom, _format_binding(binding))))
    if kb.strict:
        # Report what was blocked, using the derivation from the last round it appeared in.
        reported = _ill_typed_report(kb, rules, blocked, max_rounds)
        diags.extend(reported)
    else:
        for fact, diag in bad:
            d = provenance[fact]
            diags.append(warning(diag.code, "derived fact %s kept although ill-typed (rule %s, binding %s): %s" % (
                fact, d.rule, _format_binding(d.binding), diag.message)))
    derived = frozenset(provenance)
    return SaturatedKB(kb, rules, derived, provenance, diags)


def _ill_typed(kb: KnowledgeBase, full: FactIndex, provenance: dict) -> list:
    bad = []
    for fact in sorted(provenance, key=fact_key):
        if isinstance(fact, Membership):
            diag = kb.check_membership(fact)
        else:
            diag = kb.check_attribute(fact, full.classes.get(fact.obj, ()))
        if diag is not None:
            bad.append((fact, diag))
    return bad


def _ill_typed_report(kb, rules, blocked, max_rounds) -> list[Diagnostic]:
    if not blocked:
        return []
    # One unrestricted pass recovers a derivation for every blocked fact.
    full, provenance, _ = _fixpoint(kb, rules, set(), max_rounds)
    diags = []
    for fact in sorted(blocked, key=fact_key):
        d = provenance.get(fact)
        if isinstance(fact, Membership):
            diag = kb.check_membership(fact)
        else:
            diag = kb.check_attribute(fact, full.classes.get(fact.obj, ()))
        reason = diag.message if diag is not None else "depends on dropped facts"
        code = diag.code if diag is not None else "ILL-TYPED"
        where = " (rule %s, binding %s)" % (d.rule, _format_binding(d.binding)) if d else ""
        diags.append(warning(code, "dropped derived fact %s%s: %s" % (fact, where, reason)))
    return diags


@dataclass
class Explanation:
    fact: object
    rule: str | None
    binding: dict
    premises: list

    @property
    def asserted(self) -> bool:
        return self.rule is None

    def lines(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        if self.asserted:
            return ["%s%s  [asserted]" % (pad, self.fact)]
        out = ["%s%s  [by %s %s]" % (pad, self.fact, self.rule, _format_binding(tuple(self.binding.items())))]
        for p in self.premises:
            out.extend(p.lines(indent + 1))
        return out

    def format(self) -> str:
        return "\n".join(self.lines())


def explain(skb: SaturatedKB, fact) -> Explanation | None:
    """Derivation trace of ``fact`` down to asserted facts, or ``None``."""
    if fact in skb.base.facts:
        return Explanation(fact, None, {}, [])
    d = skb.provenance.get(fact)
    if d is None:
        return None
    premises = [explain(skb, p) for p in d.premises]
    return Explanation(fact, d.rule, d.binding_dict(), premises)
