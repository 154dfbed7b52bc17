"""Frame-logic knowledge base: ontology, saturation, conjunctive queries, RDF ingestion."""

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity
from framekb.ontology import (
    OBJECT,
    STRING,
    AttributeFact,
    AttributeSignature,
    ClassDecl,
    KnowledgeBase,
    Lit,
    Membership,
    Oid,
)
from framekb.flogic import Program, parse_program, parse_query, format_program
from framekb.engine import RuleSet, SaturatedKB, compile_rules, explain, saturate
from framekb.query import BindingSet, evaluate, match_atom

__all__ = [
    "OBJECT",
    "STRING",
    "AttributeFact",
    "AttributeSignature",
    "BindingSet",
    "ClassDecl",
    "Diagnostic",
    "DiagnosticError",
    "KnowledgeBase",
    "Lit",
    "Membership",
    "Oid",
    "Program",
    "RuleSet",
    "SaturatedKB",
    "Severity",
    "compile_rules",
    "evaluate",
    "explain",
    "format_program",
    "match_atom",
    "parse_program",
    "parse_query",
    "saturate",
]
