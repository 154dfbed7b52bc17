"""Turn parsed programs into a finalized knowledge base with compiled rules."""

from __future__ import annotations

from dataclasses import dataclass, field

from framekb.diagnostics import Diagnostic, DiagnosticError
from framekb.engine import RuleSet, compile_rules
from framekb.flogic import Program
from framekb.ontology import KnowledgeBase


@dataclass
class Loaded:
    kb: KnowledgeBase
    rules: RuleSet
    diagnostics: list = field(default_factory=list)


def load_schema(program: Program, strict: bool = True) -> tuple[KnowledgeBase, list[Diagnostic]]:
    kb = KnowledgeBase(strict=strict)
    diags: list[Diagnostic] = []
    for decl in program.class_decls:
        diags.extend(kb.declare_class(decl.name, decl.supers, decl.pos))
    for sig in program.signatures:
        diags.extend(kb.declare_signature(sig))
    diags.extend(kb.finalize())
    return kb, diags


def load_program(program: Program, strict: bool = True) -> Loaded:
    """Declare, finalize, assert facts and compile rules.

    Raises :class:`DiagnosticError` carrying every diagnostic if any stage
    produced an error.
    """
    kb, diags = load_schema(program, strict)
    if any(d.is_error for d in diags):
        raise DiagnosticError(diags)
    diags.extend(kb.assert_facts(program.facts))
    try:
        rules = compile_rules(program, kb, strict)
    except DiagnosticError as exc:
        raise DiagnosticError(diags + exc.diagnostics) from None
    diags.extend(rules.diagnostics)
    if any(d.is_error for d in diags):
        raise DiagnosticError(diags)
    return Loaded(kb, rules, diags)
