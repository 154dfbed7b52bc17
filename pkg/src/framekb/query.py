"""Conjunctive query evaluation over a saturated knowledge base."""

from __future__ import annotations

from dataclasses import dataclass, field

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity, where
from framekb.engine import SaturatedKB
from framekb.flogic import MemberAtom, Query, Var
from framekb.index import FactIndex, instantiate
from framekb.ontology import render_value


@dataclass(frozen=True)
class BindingSet:
    columns: tuple
    rows: frozenset
    diagnostics: tuple = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.rows)

    def sorted_rows(self) -> list[tuple]:
        return sorted(self.rows, key=lambda row: tuple(render_value(v) for v in row))

    def to_text(self, sep: str | None = None) -> str:
        """Header line of variable names, then one line per row.

        With ``sep`` the cells are joined by it (e.g. a tab), otherwise the
        columns are padded to a common width.
        """
        table = [list(self.columns)] + [[render_value(v) for v in row] for row in self.sorted_rows()]
        if sep is not None:
            return "".join(sep.join(cells) + "\n" for cells in table)
        widths = [max(len(r[i]) for r in table) for i in range(len(self.columns))]
        lines = []
        for cells in table:
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
        return "".join(line + "\n" for line in lines)


def _index(skb) -> FactIndex:
    return skb.index if isinstance(skb, SaturatedKB) else skb


def match_atom(atom, skb, partial: dict) -> list[dict]:
    """All consistent extensions of ``partial`` satisfying ``atom``."""
    return list(_index(skb).match(atom, dict(partial)))


def _terms(atom):
    return (atom.term,) if isinstance(atom, MemberAtom) else (atom.subject, atom.value)


def join_order(body, index: FactIndex) -> list:
    """Greedy: repeatedly take the atom with the most bound terms, cheapest first."""
    rest = list(range(len(body)))
    bound: set[str] = set()
    order = []
    while rest:
        def key(j):
            terms = _terms(body[j])
            n_bound = sum(1 for t in terms if not isinstance(t, Var) or t.name in bound)
            return (-n_bound / len(terms), index.estimate(body[j], bound), j)
        best = min(rest, key=key)
        rest.remove(best)
        order.append(body[best])
        bound |= body[best].variables()
    return order


def solutions(body, skb):
    """Yield every full binding of the body variables, in a deterministic order."""
    index = _index(skb)
    order = join_order(list(body), index)

    def step(k, binding):
        if k == len(order):
            yield binding
            return
        for ext in index.match(order[k], binding):
            yield from step(k + 1, ext)

    yield from step(0, {})


def _schema_diagnostics(query: Query, skb, strict: bool) -> list[Diagnostic]:
    if not isinstance(skb, SaturatedKB):
        return []
    kb = skb.base
    sev = Severity.ERROR if strict else Severity.WARNING
    diags = []
    for atom in query.body:
        line, col, file = where(atom.pos)
        if isinstance(atom, MemberAtom):
            if not kb.has_class(atom.cls):
                diags.append(Diagnostic(sev, "UNKNOWN-CLASS", "query uses undeclared class %s" % atom.cls, line, col, file))
        elif atom.attribute not in kb.attributes:
            diags.append(Diagnostic(sev, "UNKNOWN-ATTRIBUTE", "query uses undeclared attribute %s" % atom.attribute, line, col, file))
    return diags


def evaluate(query: Query, skb, strict: bool | None = None) -> BindingSet:
    """Bindings of the projected variables for which every body atom holds.

    Body variables that are not projected are existential.
    """
    if strict is None:
        strict = skb.base.strict if isinstance(skb, SaturatedKB) else True
    diags = _schema_diagnostics(query, skb, strict)
    if diags:
        if strict:
            raise DiagnosticError(diags)
        return BindingSet(tuple(query.variables), frozenset(), tuple(diags))
    rows = {tuple(b[v] for v in query.variables) for b in solutions(query.body, skb)}
    return BindingSet(tuple(query.variables), frozenset(rows))


def witness(query: Query, skb, row: tuple) -> list:
    """Ground body facts of the first full binding producing ``row``."""
    wanted = dict(zip(query.variables, row))
    for binding in solutions(query.body, skb):
        if all(binding[k] == v for k, v in wanted.items()):
            return [instantiate(atom, binding) for atom in query.body]
    return []
