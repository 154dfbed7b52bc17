import shutil
import subprocess
import sys

import pytest

from framekb import Lit, parse_program, parse_query, saturate
from framekb.cli import main
from framekb.loader import load_program

from conftest import FIXTURES, read_fixture
from oracles import domain, exhaustive_query


@pytest.fixture
def kbctl(workspace_dir, monkeypatch, capsys):
    """Run kbctl inside a fresh copy of the golden workspace; returns (status, stdout, stderr)."""
    monkeypatch.chdir(workspace_dir)

    def run(*argv):
        capsys.readouterr()
        status = main(list(argv))
        out, err = capsys.readouterr()
        return status, out, err

    run.dir = workspace_dir
    return run


def init(kbctl, *extra):
    status, out, _ = kbctl("init", "-o", "ontology.flo", *extra, "-m", "mapping.map")
    assert status == 0, out
    return out


def test_init_and_show_version(kbctl):
    assert "at v1" in init(kbctl)
    assert kbctl("version", "show")[:2] == (0, "v1\n")
    assert "version = 1" in (kbctl.dir / "kbctl.manifest").read_text()


def test_init_twice_is_an_io_error(kbctl):
    init(kbctl)
    status, _, err = kbctl("init", "-o", "ontology.flo")
    assert status == 2 and "already exists" in err


def test_check_summary_table_program(kbctl):
    shutil.copy(FIXTURES / "golden" / "table.flo", "table.flo")
    status, out, err = kbctl("check", "table.flo")
    assert status == 0, err
    assert out.startswith("ok: ")


def test_check_cyclic_hierarchy(kbctl):
    (kbctl.dir / "cycle.flo").write_text("A :: B.\nB :: A.\n")
    status, _, err = kbctl("check", "cycle.flo")
    assert status == 1
    assert "error CYCLE" in err


def test_check_missing_file(kbctl):
    assert kbctl("check", "nope.flo")[0] == 2


def test_check_reports_positions(kbctl):
    (kbctl.dir / "bad.flo").write_text("A.\nB :: .\n")
    status, _, err = kbctl("check", "bad.flo")
    assert status == 1
    assert err.startswith("bad.flo:2:6: error SYNTAX ")


def test_check_workspace(kbctl):
    init(kbctl)
    status, out, _ = kbctl("check")
    assert status == 0 and out.startswith("ok: v1,")


def test_missing_workspace_is_an_io_error(kbctl, tmp_path):
    assert kbctl("-w", str(tmp_path / "none"), "version", "show")[0] == 2


def test_mustermann_query(kbctl):
    init(kbctl)
    status, out, _ = kbctl("query", "-f", "mustermann.query")
    assert status == 0
    assert out == 'NAME\n"Meier"\n"Schulz"\n'


def test_query_explain(kbctl):
    init(kbctl)
    status, out, _ = kbctl("query", "-f", "mustermann.query", "--explain", "1")
    assert status == 0
    assert "mustermann[KooperiertMit ->> meier]  [by KooperiertMit-equivalence (forward) {PE1=meier, PE2=mustermann}]" in out
    assert "meier[KooperiertMit ->> mustermann]  [asserted]" in out
    assert kbctl("query", "-f", "mustermann.query", "--explain", "9")[0] == 2


def test_query_tsv(kbctl):
    init(kbctl)
    status, out, _ = kbctl("query", "--tsv", "-q", 'FORALL P, N <- P : TOrganisation[HatName ->> N].')
    assert out == 'P\tN\nacme\t"ACME"\n'


def test_unsafe_query_exit_1(kbctl):
    init(kbctl)
    status, _, err = kbctl("query", "-q", "FORALL X <- Y : TPerson.")
    assert status == 1 and "UNSAFE-QUERY" in err


def test_query_without_facts_prints_header(kbctl):
    text = (kbctl.dir / "ontology.flo").read_text()
    (kbctl.dir / "ontology.flo").write_text(text.split("// Instance data")[0])
    init(kbctl)
    status, out, _ = kbctl("query", "-f", "mustermann.query")
    assert (status, out) == (0, "NAME\n")


def test_query_cache_is_reused_and_consistent(kbctl):
    init(kbctl)
    first = kbctl("query", "-f", "mustermann.query")
    assert (kbctl.dir / ".kbctl-cache.json").exists()
    assert kbctl("query", "-f", "mustermann.query") == first
    assert kbctl("query", "--no-cache", "-f", "mustermann.query") == first


def test_ingest_bag(kbctl):
    init(kbctl)
    status, out, err = kbctl("ingest", "docs/bag.rdf")
    assert status == 0, err
    assert out == "docs/bag.rdf: 3 statements, 7 facts, 0 warnings\n"
    status, out, _ = kbctl("query", "-q", "FORALL A <- A : TPerson[HatVeroeffentlicht ->> V].")
    assert out == "A\nAutor_1\nAutor_2\n"


def test_ingest_empty_rdf(kbctl):
    init(kbctl)
    assert kbctl("ingest", "docs/empty.rdf")[:2] == (0, "docs/empty.rdf: 0 statements, 0 facts, 0 warnings\n")


def test_ingest_html(kbctl):
    init(kbctl)
    status, out, _ = kbctl("ingest", "docs/title.html")
    assert (status, out) == (0, "docs/title.html: 1 statement, 2 facts, 0 warnings\n")
    assert kbctl("query", "--tsv", "-q", 'FORALL T <- X[HatTitel ->> T].')[1] == 'T\n"Beispielstitel"\n'


def test_ingest_is_idempotent(kbctl):
    init(kbctl)
    kbctl("ingest", "docs/bag.rdf")
    snapshot = (kbctl.dir / "facts.snapshot").read_bytes()
    kbctl("ingest", "docs/bag.rdf")
    assert (kbctl.dir / "facts.snapshot").read_bytes() == snapshot


def test_ingest_missing_document(kbctl):
    init(kbctl)
    assert kbctl("ingest", "docs/none.rdf")[0] == 2


def test_ingest_malformed_strict_rejected_lenient_recovered(kbctl):
    init(kbctl)
    shutil.copy(FIXTURES / "rdf" / "bag_serialization.rdf", "listing_bag.rdf")
    status, out, _ = kbctl("ingest", "listing_bag.rdf")
    assert status == 1 and "rejected" in out
    status, out, err = kbctl("--lenient", "ingest", "listing_bag.rdf")
    assert status == 0, err
    assert out.startswith("listing_bag.rdf: 3 statements, 7 facts, ")
    assert "warning XML-RECOVER" in err


def versioned(kbctl, version):
    name = "docs/bag_v%d.rdf" % version
    text = (kbctl.dir / "docs" / "bag.rdf").read_text().replace("onto#v1", "onto#v%d" % version)
    (kbctl.dir / name).write_text(text)
    return name


def test_version_policy_matrix(kbctl):
    init(kbctl)
    assert kbctl("version", "bump")[:2] == (0, "v2\n")
    v1, v2, v3 = versioned(kbctl, 1), versioned(kbctl, 2), versioned(kbctl, 3)
    status, out, err = kbctl("ingest", v2)
    assert (status, err) == (0, "")
    status, out, err = kbctl("ingest", v1)
    assert status == 0 and "warning VERSION-OLD" in err and "1 warning" in out
    status, out, err = kbctl("ingest", v3)
    assert status == 1 and "error VERSION-NEWER" in err and "rejected" in out


def test_stale_ontology_blocks_ingest_until_bump(kbctl):
    init(kbctl)
    with open(kbctl.dir / "ontology.flo", "a") as f:
        f.write('\nhoffmann : TForscher[HatName ->> "Hoffmann"].\n')
    assert "bump required" in kbctl("version", "show")[1]
    status, _, err = kbctl("ingest", "docs/bag.rdf")
    assert status == 1 and "STALE-VERSION" in err
    status, _, err = kbctl("check")
    assert status == 0 and "warning STALE-VERSION" in err
    assert kbctl("version", "bump")[:2] == (0, "v2\n")
    assert kbctl("ingest", "docs/bag.rdf")[0] == 0
    manifest = (kbctl.dir / "kbctl.manifest").read_text()
    assert " v2 bump" in manifest


def test_bump_refused_with_ontology_errors(kbctl):
    init(kbctl)
    with open(kbctl.dir / "ontology.flo", "a") as f:
        f.write("\nTPerson :: TForscher.\n")
    status, _, err = kbctl("version", "bump")
    assert status == 1 and "CYCLE" in err
    assert kbctl("version", "show")[1].startswith("v1")


def test_expert_scenario(kbctl):
    shutil.copy(FIXTURES / "scenario" / "skills.flo", "skills.flo")
    shutil.copy(FIXTURES / "scenario" / "expert.query", "expert.query")
    init(kbctl, "-o", "skills.flo")
    status, out, err = kbctl("query", "-f", "expert.query")
    assert (status, out) == (0, 'NAME\n"Krause"\n'), err

    program = parse_program(read_fixture("workspace", "ontology.flo") + read_fixture("scenario", "skills.flo"))
    loaded = load_program(program)
    skb = saturate(loaded.kb, loaded.rules)
    objects = {f.obj for f in skb.base.facts}
    assert len(objects) == 10
    query = parse_query(read_fixture("scenario", "expert.query"))
    assert len(query.body) == 4
    assert exhaustive_query(query, skb.facts, domain(skb.facts, program)) == {(Lit("Krause"),)}


def test_console_script_entry_point(workspace_dir):
    result = subprocess.run([sys.executable, "-m", "framekb.cli", "check", "ontology.flo"],
                            cwd=workspace_dir, capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert result.stdout.startswith("ok: ")
    result = subprocess.run([sys.executable, "-m", "framekb.cli", "bogus"], capture_output=True, text=True)
    assert result.returncode == 2
