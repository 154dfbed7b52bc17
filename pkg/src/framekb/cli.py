"""kbctl: check ontologies, ingest annotated documents, query and manage versions.

Exit status: 0 success, 1 domain error (diagnostics of error severity,
rejected documents), 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity
from framekb.engine import explain
from framekb.flogic import Program, parse_program, parse_query
from framekb.loader import load_program
from framekb.query import evaluate, witness
from framekb.workspace import MANIFEST, Workspace, WorkspaceError

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


def _report(diags, stream=None) -> None:
    stream = stream or sys.stderr
    for d in diags:
        print(d.format(), file=stream)


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommands accept the global flags too; SUPPRESS keeps them from
    # overwriting values given before the subcommand name.
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--workspace", "-w", metavar="DIR", default=default("."),
                        help="workspace directory (default: current directory)")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_const", const=True, default=default(True),
                      help="reject ill-typed or unmapped data (default)")
    mode.add_argument("--lenient", dest="strict", action="store_const", const=False, default=argparse.SUPPRESS,
                      help="downgrade recoverable problems to warnings and repair malformed markup")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbctl", description="Frame-logic knowledge base tool.")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_options(p, suppress=True)
        return p

    p = command("init", "create a workspace manifest")
    p.add_argument("--ontology", "-o", action="append", required=True, metavar="FILE", help="ontology source (repeatable)")
    p.add_argument("--mapping", "-m", metavar="FILE", help="RDF property mapping file")

    p = command("check", "parse and finalize ontology sources")
    p.add_argument("files", nargs="*", help="sources to check (default: the workspace ontology)")

    p = command("query", "evaluate a query over the saturated knowledge base")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("-q", "--query", metavar="TEXT", help="query text")
    src.add_argument("-f", "--file", metavar="FILE", help="file holding one query")
    p.add_argument("--explain", type=int, metavar="N", help="print derivations supporting result row N (1-based)")
    p.add_argument("--tsv", action="store_true", help="tab-separated output")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not update the saturation cache")

    p = command("ingest", "ingest XML/RDF/HTML documents")
    p.add_argument("documents", nargs="+")

    p = command("version", "show or bump the ontology version")
    p.add_argument("action", choices=["show", "bump"])
    return parser


def cmd_init(args) -> int:
    ws = Workspace.init(args.workspace, args.ontology, args.mapping, args.strict)
    print("initialized %s at v%d" % (ws.root / MANIFEST, ws.manifest.version))
    return EXIT_OK


def cmd_check(args) -> int:
    if args.files:
        program = Program()
        diags: list[Diagnostic] = []
        for name in args.files:
            try:
                text = Path(name).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                print("kbctl: cannot read %s: %s" % (name, getattr(exc, "strerror", None) or exc), file=sys.stderr)
                return EXIT_IO
            try:
                program.extend(parse_program(text, name))
            except DiagnosticError as exc:
                diags.extend(exc.diagnostics)
        if any(d.is_error for d in diags):
            _report(diags)
            return EXIT_DOMAIN
        diags.extend(program.diagnostics)
        try:
            loaded = load_program(program, args.strict)
        except DiagnosticError as exc:
            _report(diags + exc.diagnostics)
            return EXIT_DOMAIN
        _report(diags + loaded.diagnostics)
        print("ok: %d classes, %d signatures, %d facts, %d rules" % (
            len(loaded.kb.classes), len(loaded.kb.signatures), len(loaded.kb.facts), len(loaded.rules)))
        return EXIT_OK
    ws = Workspace.open(args.workspace, args.strict)
    try:
        loaded = ws.load_schema()
    except DiagnosticError as exc:
        _report(exc.diagnostics)
        return EXIT_DOMAIN
    diags = list(loaded.diagnostics)
    if ws.is_stale():
        diags.append(ws.stale_diagnostic(Severity.WARNING))
    _report(diags)
    print("ok: v%d, %d classes, %d signatures, %d rules" % (
        ws.manifest.version, len(loaded.kb.classes), len(loaded.kb.signatures), len(loaded.rules)))
    return EXIT_OK


def cmd_query(args) -> int:
    if args.file:
        try:
            text, name = Path(args.file).read_text(encoding="utf-8"), args.file
        except (OSError, UnicodeDecodeError) as exc:
            print("kbctl: cannot read %s: %s" % (args.file, getattr(exc, "strerror", None) or exc), file=sys.stderr)
            return EXIT_IO
    else:
        text, name = args.query, "<query>"
    ws = Workspace.open(args.workspace, args.strict)
    try:
        query = parse_query(text, name)
        skb, diags = ws.saturated(use_cache=not args.no_cache)
        result = evaluate(query, skb, args.strict)
    except DiagnosticError as exc:
        _report(exc.diagnostics)
        return EXIT_DOMAIN
    _report([d for d in list(diags) + list(result.diagnostics) if d.severity is not Severity.NOTE])
    sys.stdout.write(result.to_text("\t" if args.tsv else None))
    if args.explain is not None:
        rows = result.sorted_rows()
        if not 1 <= args.explain <= len(rows):
            print("kbctl: --explain %d: result has %d row(s)" % (args.explain, len(rows)), file=sys.stderr)
            return EXIT_IO
        print()
        print("row %d:" % args.explain)
        for fact in witness(query, skb, rows[args.explain - 1]):
            print(explain(skb, fact).format())
    return EXIT_OK


def cmd_ingest(args) -> int:
    ws = Workspace.open(args.workspace, args.strict)
    try:
        reports = ws.ingest(args.documents)
    except DiagnosticError as exc:
        _report(exc.diagnostics)
        return EXIT_DOMAIN
    status = EXIT_OK
    for r in reports:
        _report(r.diagnostics)
        print(r.summary())
        if r.rejected:
            status = EXIT_DOMAIN
    return status


def cmd_version(args) -> int:
    ws = Workspace.open(args.workspace, args.strict)
    if args.action == "show":
        stale = " (ontology changed; bump required)" if ws.is_stale() else ""
        print("v%d%s" % (ws.manifest.version, stale))
        return EXIT_OK
    try:
        version = ws.bump()
    except DiagnosticError as exc:
        _report(exc.diagnostics)
        print("kbctl: ontology has errors; version not bumped", file=sys.stderr)
        return EXIT_DOMAIN
    print("v%d" % version)
    return EXIT_OK


COMMANDS = {"init": cmd_init, "check": cmd_check, "query": cmd_query, "ingest": cmd_ingest, "version": cmd_version}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except WorkspaceError as exc:
        print("kbctl: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except DiagnosticError as exc:
        _report(exc.diagnostics)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
