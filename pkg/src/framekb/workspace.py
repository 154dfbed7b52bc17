"""On-disk workspace: manifest, fact snapshot, saturation cache and document ingestion."""

from __future__ import annotations

import copy
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from framekb.diagnostics import Diagnostic, DiagnosticError, Severity, error, warning
from framekb.dtd import resolve_dtd, validate
from framekb.engine import Derivation, SaturatedKB, saturate
from framekb.flogic import Program, parse_program
from framekb.loader import Loaded, load_program
from framekb.ontology import AttributeFact, Lit, Membership, Oid, fact_key
from framekb.rdf import RECOVERY_IMPLIED_END, MappingConfig, check_version, extract_statements, map_to_facts
from framekb.xmlreader import find_rdf_blocks, host_namespaces, parse_xml

MANIFEST = "kbctl.manifest"
CACHE = ".kbctl-cache.json"
CACHE_FORMAT = 1


class WorkspaceError(Exception):
    """I/O or usage problem (missing manifest, unreadable file)."""


# fact (de)serialization

def value_to_json(value) -> dict:
    return {"lit": value.text} if isinstance(value, Lit) else {"oid": value.name}


def value_from_json(data: dict):
    return Lit(data["lit"]) if "lit" in data else Oid(data["oid"])


def fact_to_json(fact) -> dict:
    if isinstance(fact, Membership):
        return {"obj": fact.obj.name, "class": fact.cls}
    return {"obj": fact.obj.name, "attr": fact.attribute, **value_to_json(fact.value)}


def fact_from_json(data: dict):
    if "class" in data:
        return Membership(Oid(data["obj"]), data["class"])
    return AttributeFact(Oid(data["obj"]), data["attr"], value_from_json(data))


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


# manifest

@dataclass
class Manifest:
    version: int = 1
    ontology: list = field(default_factory=list)
    ontology_digest: str = ""
    mapping: str | None = None
    documents: list = field(default_factory=list)
    snapshot: str = "facts.snapshot"
    history: list = field(default_factory=list)

    _LISTS = {"ontology": "ontology", "document": "documents", "history": "history"}

    def dumps(self) -> str:
        lines = ["# kbctl workspace manifest", "version = %d" % self.version]
        lines += ["ontology = %s" % p for p in self.ontology]
        lines.append("ontology-digest = %s" % self.ontology_digest)
        if self.mapping:
            lines.append("mapping = %s" % self.mapping)
        lines += ["document = %s" % p for p in self.documents]
        lines.append("snapshot = %s" % self.snapshot)
        lines += ["history = %s" % h for h in self.history]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> Manifest:
        m = cls()
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise WorkspaceError("%s:%d: expected 'key = value'" % (MANIFEST, n))
            if key in cls._LISTS:
                getattr(m, cls._LISTS[key]).append(value)
            elif key == "version":
                try:
                    m.version = int(value.lstrip("v"))
                except ValueError:
                    raise WorkspaceError("%s:%d: bad version %r" % (MANIFEST, n, value)) from None
            elif key == "ontology-digest":
                m.ontology_digest = value
            elif key in ("mapping", "snapshot"):
                setattr(m, key, value)
            else:
                raise WorkspaceError("%s:%d: unknown key %r" % (MANIFEST, n, key))
        return m


@dataclass
class IngestReport:
    document: str
    statements: int = 0
    facts: int = 0
    diagnostics: list = field(default_factory=list)
    rejected: bool = False

    @property
    def warnings(self) -> int:
        return sum(1 for d in self.diagnostics if d.severity is Severity.WARNING)

    def summary(self) -> str:
        if self.rejected:
            errors = sum(1 for d in self.diagnostics if d.is_error)
            return "%s: rejected (%d error%s)" % (self.document, errors, "" if errors == 1 else "s")
        return "%s: %s, %s, %s" % (self.document, _count(self.statements, "statement"),
                                   _count(self.facts, "fact"), _count(self.warnings, "warning"))


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class Workspace:
    def __init__(self, root: Path, manifest: Manifest, strict: bool = True):
        self.root = Path(root)
        self.manifest = manifest
        self.strict = strict

    # lifecycle

    @classmethod
    def open(cls, root, strict: bool = True) -> Workspace:
        root = Path(root)
        try:
            text = (root / MANIFEST).read_text(encoding="utf-8")
        except OSError as exc:
            raise WorkspaceError("cannot read workspace manifest %s: %s" % (root / MANIFEST, exc.strerror)) from None
        return cls(root, Manifest.loads(text), strict)

    @classmethod
    def init(cls, root, ontology: list, mapping: str | None = None, strict: bool = True) -> Workspace:
        root = Path(root)
        if (root / MANIFEST).exists():
            raise WorkspaceError("%s already exists" % (root / MANIFEST))
        root.mkdir(parents=True, exist_ok=True)
        ws = cls(root, Manifest(ontology=[ws_rel(root, p) for p in ontology],
                                mapping=ws_rel(root, mapping) if mapping else None), strict)
        ws.load_ontology()
        ws.manifest.ontology_digest = ws.ontology_digest()
        ws.manifest.history.append("%s v1 init" % _now())
        ws.save()
        return ws

    def save(self) -> None:
        self._write(MANIFEST, self.manifest.dumps())

    def path(self, rel: str) -> Path:
        return self.root / rel

    def read(self, rel: str) -> str:
        try:
            return self.path(rel).read_text(encoding="utf-8")
        except OSError as exc:
            raise WorkspaceError("cannot read %s: %s" % (self.path(rel), exc.strerror)) from None
        except UnicodeDecodeError as exc:
            raise WorkspaceError("%s is not valid UTF-8: %s" % (self.path(rel), exc.reason)) from None

    def _write(self, rel: str, text: str) -> None:
        tmp = self.path(rel + ".tmp")
        try:
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, self.path(rel))
        except OSError as exc:
            raise WorkspaceError("cannot write %s: %s" % (self.path(rel), exc.strerror)) from None

    # ontology

    def ontology_digest(self) -> str:
        h = hashlib.sha256()
        for rel in self.manifest.ontology:
            h.update(rel.encode() + b"\0" + self.read(rel).encode() + b"\0")
        return h.hexdigest()

    def is_stale(self) -> bool:
        return self.ontology_digest() != self.manifest.ontology_digest

    def stale_diagnostic(self, severity: Severity) -> Diagnostic:
        v = self.manifest.version
        return Diagnostic(severity, "STALE-VERSION",
                          "ontology sources changed since v%d; run 'kbctl version bump' before ingesting" % v,
                          0, 0, MANIFEST)

    def load_ontology(self) -> tuple[Program, list]:
        """Parse every ontology source into one program; raises on errors."""
        program = Program()
        diags: list[Diagnostic] = []
        for rel in self.manifest.ontology:
            try:
                program.extend(parse_program(self.read(rel), rel))
            except DiagnosticError as exc:
                diags.extend(exc.diagnostics)
        if any(d.is_error for d in diags):
            raise DiagnosticError(diags)
        return program, diags + program.diagnostics

    def load_schema(self) -> Loaded:
        program, diags = self.load_ontology()
        try:
            loaded = load_program(program, self.strict)
        except DiagnosticError as exc:
            raise DiagnosticError(diags + exc.diagnostics) from None
        loaded.diagnostics = diags + loaded.diagnostics
        return loaded

    def mapping(self) -> MappingConfig:
        if not self.manifest.mapping:
            raise WorkspaceError("workspace has no mapping configuration")
        return MappingConfig.parse(self.read(self.manifest.mapping), self.manifest.mapping)

    # snapshot

    def snapshot_records(self) -> list[tuple[str, object]]:
        if not self.path(self.manifest.snapshot).exists():
            return []
        out = []
        for n, line in enumerate(self.read(self.manifest.snapshot).splitlines(), 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                out.append((data.pop("document"), fact_from_json(data)))
            except (ValueError, KeyError):
                raise WorkspaceError("%s:%d: malformed snapshot line" % (self.manifest.snapshot, n)) from None
        return out

    def write_snapshot(self, records) -> None:
        lines = sorted({_dumps({"document": doc, **fact_to_json(f)}) for doc, f in records},
                       key=lambda s: (json.loads(s)["document"], fact_key(fact_from_json(json.loads(s)))))
        self._write(self.manifest.snapshot, "".join(line + "\n" for line in lines))

    def load(self, exclude: set = frozenset()) -> Loaded:
        """Ontology plus the snapshot facts of every document not in ``exclude``."""
        loaded = self.load_schema()
        facts = [f for doc, f in self.snapshot_records() if doc not in exclude]
        diags = [d.with_file(self.manifest.snapshot) if d.file is None else d
                 for d in loaded.kb.assert_facts(facts)]
        loaded.diagnostics.extend(diags)
        if any(d.is_error for d in diags):
            raise DiagnosticError(loaded.diagnostics)
        return loaded

    # saturation with cache

    def _cache_key(self) -> str:
        h = hashlib.sha256()
        h.update(("%d|%s|" % (CACHE_FORMAT, self.strict)).encode())
        h.update(self.ontology_digest().encode())
        snap = self.path(self.manifest.snapshot)
        h.update(snap.read_bytes() if snap.exists() else b"")
        return h.hexdigest()

    def saturated(self, use_cache: bool = True) -> tuple[SaturatedKB, list]:
        loaded = self.load()
        key = self._cache_key()
        if use_cache:
            skb = self._read_cache(key, loaded)
            if skb is not None:
                return skb, loaded.diagnostics + skb.diagnostics
        skb = saturate(loaded.kb, loaded.rules)
        if use_cache:
            self._write_cache(key, skb)
        return skb, loaded.diagnostics + skb.diagnostics

    def _write_cache(self, key: str, skb: SaturatedKB) -> None:
        derived = []
        for fact in sorted(skb.provenance, key=fact_key):
            d = skb.provenance[fact]
            derived.append({"fact": fact_to_json(fact), "rule": d.rule, "round": d.round,
                            "binding": [[k, value_to_json(v)] for k, v in d.binding],
                            "premises": [fact_to_json(p) for p in d.premises]})
        diags = [[d.severity.value, d.code, d.message, d.line, d.col, d.file] for d in skb.diagnostics]
        try:
            self._write(CACHE, _dumps({"key": key, "derived": derived, "diagnostics": diags}))
        except WorkspaceError:
            pass  # the cache is an optimization only

    def _read_cache(self, key: str, loaded: Loaded) -> SaturatedKB | None:
        try:
            data = json.loads(self.path(CACHE).read_text(encoding="utf-8"))
            if data.get("key") != key:
                return None
            provenance = {}
            for item in data["derived"]:
                binding = tuple((k, value_from_json(v)) for k, v in item["binding"])
                premises = tuple(fact_from_json(p) for p in item["premises"])
                provenance[fact_from_json(item["fact"])] = Derivation(item["rule"], binding, premises, item["round"])
            diags = [Diagnostic(Severity(s), c, m, l, col, f) for s, c, m, l, col, f in data["diagnostics"]]
        except (OSError, ValueError, KeyError, TypeError):
            return None
        return SaturatedKB(loaded.kb, loaded.rules, frozenset(provenance), provenance, diags)

    # versions

    def bump(self) -> int:
        """Increment the ontology version; refuses if the ontology has errors."""
        self.load_schema()
        self.manifest.version += 1
        self.manifest.ontology_digest = self.ontology_digest()
        self.manifest.history.append("%s v%d bump" % (_now(), self.manifest.version))
        self.save()
        return self.manifest.version

    # ingestion

    def ingest(self, paths: list[str]) -> list[IngestReport]:
        """Parse, validate, extract, version-check, map and merge each document.

        Rejected documents leave the snapshot untouched; accepted ones
        replace any facts previously ingested from the same path.
        """
        if self.is_stale():
            raise DiagnosticError([self.stale_diagnostic(Severity.ERROR)])
        config = self.mapping()
        rels = [ws_rel(self.root, p) for p in paths]
        loaded = self.load(exclude=set(rels))
        kb = loaded.kb
        records = [(doc, f) for doc, f in self.snapshot_records() if doc not in set(rels)]
        reports = []
        for shown, rel in zip(paths, rels):
            report = IngestReport(shown)
            reports.append(report)
            try:
                source = Path(shown).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise WorkspaceError("cannot read %s: %s" % (shown, getattr(exc, "strerror", None) or exc)) from None
            trial = copy.deepcopy(kb)
            try:
                graphs = self._extract(source, shown, rel, config, report)
                facts = []
                for graph in graphs:
                    report.statements += len(graph.statements)
                    report.diagnostics.extend(check_version(graph.bindings, self.manifest.version, config.namespaces))
                    if any(d.is_error for d in report.diagnostics):
                        raise _Rejected()
                    result = map_to_facts(graph, trial, config, self.strict)
                    report.diagnostics.extend(result.diagnostics)
                    facts.extend(result.facts)
                report.diagnostics.extend(trial.assert_facts(facts))
                if any(d.is_error for d in report.diagnostics):
                    raise _Rejected()
            except DiagnosticError as exc:
                report.diagnostics.extend(exc.diagnostics)
                report.rejected = True
            except _Rejected:
                report.rejected = True
            report.diagnostics = [d if d.file else d.with_file(shown) for d in report.diagnostics]
            if report.rejected:
                continue
            kb = trial
            unique = sorted(set(facts), key=fact_key)
            report.facts = len(unique)
            records.extend((rel, f) for f in unique)
            if rel not in self.manifest.documents:
                self.manifest.documents.append(rel)
        self.write_snapshot(records)
        self.save()
        return reports

    def _extract(self, source: str, shown: str, rel: str, config: MappingConfig, report: IngestReport) -> list:
        recover = not self.strict
        options = dict(lenient=not self.strict, recover=recover, implied_end=RECOVERY_IMPLIED_END if recover else None)
        if Path(shown).suffix.lower() in (".html", ".htm"):
            docs = []
            for span in find_rdf_blocks(source):
                docs.append(parse_xml(source, span=span, nsmap=host_namespaces(source, span[0]), **options))
            if not docs:
                report.diagnostics.append(warning("RDF-NONE", "no rdf block found in HTML document", 1, 1))
        else:
            docs = [parse_xml(source, **options)]
        graphs = []
        for k, doc in enumerate(docs):
            report.diagnostics.extend(doc.diagnostics)
            if doc.doctype is not None:
                base = Path(shown).parent

                def read(system_id, base=base):
                    try:
                        return (base / system_id).read_text(encoding="utf-8")
                    except OSError as exc:
                        raise DiagnosticError([error("DTD-IO", "cannot read DTD %s: %s" % (system_id, exc.strerror))]) from None

                dtd, diags = resolve_dtd(doc.doctype, read=read)
                report.diagnostics.extend(diags)
                if dtd is not None:
                    violations = validate(doc.root, dtd, doc.doctype.name)
                    if not self.strict:
                        violations = [Diagnostic(Severity.WARNING, d.code, d.message, d.line, d.col) for d in violations]
                    report.diagnostics.extend(violations)
                    if any(d.is_error for d in violations):
                        raise _Rejected()
            doc_id = rel if len(docs) == 1 else "%s#%d" % (rel, k + 1)
            graph = extract_statements(doc.root, config.prefixes, self.strict, doc_id)
            report.diagnostics.extend(graph.diagnostics)
            graphs.append(graph)
        return graphs


class _Rejected(Exception):
    """The document's diagnostics are already on its report."""


def _count(n: int, noun: str) -> str:
    return "%d %s%s" % (n, noun, "" if n == 1 else "s")


def ws_rel(root: Path, path: str) -> str:
    """``path`` relative to the workspace root when it lies inside it."""
    absolute = Path(path).resolve()
    try:
        return absolute.relative_to(Path(root).resolve()).as_posix()
    except ValueError:
        return str(absolute)
