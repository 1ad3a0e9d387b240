import json

import pytest

from gausstrace import cli
from gausstrace.config import ConfigError, load_campaign, parse_campaign


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# -------------------------------------------------------------------- parsing


def test_parse_settings_and_jobs():
    camp = parse_campaign(
        "# header\n"
        "set out=o workers=3 levels=500\n"
        "\n"
        'job id=a type=check inequality=Gross field=exp  # trailing comment\n'
        'job id=b type=spectrum problem=oscillator domain="kind=interval a=-2 b=2" h=0.1\n')
    assert (camp.out, camp.workers, camp.levels) == ("o", 3, 500)
    assert [j.id for j in camp.jobs] == ["a", "b"]
    assert camp.jobs[1].get("domain") == "kind=interval a=-2 b=2"
    assert camp.jobs[1].line == 5


@pytest.mark.parametrize("text, line, fragment", [
    ("job id=a type=check inequality=Gross", 1, "missing: field"),
    ("\n\njob id=a type=nope", 3, "unknown job type"),
    ("job id=a type=check inequality=Gross field=nosuch", 1, "unknown field"),
    ("job id=a type=check inequality=Nope field=exp", 1, "no check for inequality"),
    ("job id=a type=scan inequality=TraceL2", 1, "no sharpness scan"),
    ("job id=a type=scan inequality=EmbedP grid=0.1,x", 1, "grid must be"),
    ("job id=a type=check inequality=Gross field=exp p=two", 1, "not a number"),
    ("job id=a type=check inequality=Gross field=exp colour=red", 1, "unknown key"),
    ('job id=a type=solve problem=neumann domain="kind=disk" h=0.1 field=exp', 1, "bad domain"),
    ("job id=a type=spectrum problem=heat domain=\"kind=interval a=0 b=1\" h=0.1", 1,
     "unknown spectrum problem"),
    ("set workers=many", 1, "non-negative integer"),
    ("set colour=red", 1, "unknown setting"),
    ("run everything", 1, "expected 'set' or 'job'"),
    ("job id=a type=check inequality=Gross field=exp field=exp", 1, "given twice"),
    ('job id="a type=check', 1, "quotation"),
    ("job type=check inequality=Gross field=exp", 1, "needs an id"),
    ("job id=a type=check inequality=Gross field=exp\njob id=a type=check inequality=Gross "
     "field=exp", 2, "duplicate job id"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_campaign(text, "c.cfg")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"c.cfg:{line}: ")
    assert fragment in str(exc.value)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_campaign(tmp_path / "absent.cfg")


def test_config_error_exit_status(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("set out=x\njob id=a type=check inequality=Gross field=nosuch\n")
    code, _, err = _run(["run", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == cli.EXIT_CONFIG
    assert f"{cfg}:2: unknown field 'nosuch'" in err


def test_empty_campaign(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing\nset workers=2\n")
    out = tmp_path / "o"
    code, _, _ = _run(["run", str(cfg), "--out", str(out)], capsys)
    assert code == cli.EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["summary.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["jobs"] == [] and summary["tripwire"] is False


# ----------------------------------------------------------------- campaigns


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    dirs = [tmp_path_factory.mktemp(f"suite{i}") for i in range(2)]
    codes = [cli.main(["run", "suite", "--out", str(d), "--no-timestamps"] +
                      (["--workers", "3"] if i else [])) for i, d in enumerate(dirs)]
    return codes, dirs


def test_bundled_suite_passes(suite_runs):
    codes, dirs = suite_runs
    assert codes == [cli.EXIT_OK, cli.EXIT_OK]
    camp = load_campaign(cli.bundled_suite())
    reports = sorted(p.stem for p in dirs[0].glob("*.json") if p.name != "summary.json")
    assert reports == sorted(j.id for j in camp.jobs) and len(reports) == 14
    summary = json.loads((dirs[0] / "summary.json").read_text())
    assert [j["job"] for j in summary["jobs"]] == [j.id for j in camp.jobs]
    assert not summary["tripwire"] and summary["failed"] == []


def test_bundled_suite_byte_identical_across_runs_and_workers(suite_runs):
    _, (a, b) = suite_runs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_suite_report_contents(suite_runs):
    _, (d, _) = suite_runs
    osc = json.loads((d / "oscillator.json").read_text())
    assert osc["result"]["eigenvalues"][1] == pytest.approx(1.0, abs=1e-4)
    assert osc["result"]["rayleigh_rel_diff"] <= 1e-6
    assert osc["tables"] == ["oscillator_modes.csv"]
    scan = json.loads((d / "scan_embed_p.json").read_text())
    assert scan["verdict"] == "critical=0.55"
    assert (d / "scan_trace_logp_scan.csv").read_text().splitlines()[0] == \
        "beta,verdict,A1,A2,A3"
    for check in ("gross_exp", "gross_quadratic", "embed_p_power", "trace_logp_power"):
        assert json.loads((d / f"{check}.json").read_text())["verdict"] == "Holds"
    assert "runtime_s" not in osc and "generated" not in osc


def test_tripwire_exit_and_path(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "_check", lambda job, levels: ("Diverges", 3.0, {"lhs": 3.0}, {}))
    cfg = tmp_path / "c.cfg"
    cfg.write_text("job id=bad type=check inequality=Gross field=exp\n")
    out = tmp_path / "o"
    code, _, err = _run(["run", str(cfg), "--out", str(out)], capsys)
    assert code == cli.EXIT_FAIL
    assert f"tripwire: job 'bad' -> {out / 'bad.json'}" in err
    assert json.loads((out / "summary.json").read_text())["tripwire"] is True


def test_failed_job_does_not_stop_campaign(tmp_path, monkeypatch, capsys):
    def boom(job):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "_solve", boom)
    cfg = tmp_path / "c.cfg"
    cfg.write_text('job id=s type=solve problem=neumann domain="kind=interval a=-1 b=1" h=0.1 '
                   "field=coordinate\njob id=g type=check inequality=Gross field=exp\n")
    out = tmp_path / "o"
    code, _, err = _run(["run", str(cfg), "--out", str(out)], capsys)
    assert code == cli.EXIT_FAIL
    assert "failed: job 's'" in err
    rep = json.loads((out / "s.json").read_text())
    assert rep["verdict"] == "Failed" and "solver exploded" in rep["result"]["error"]
    assert json.loads((out / "g.json").read_text())["verdict"] == "Holds"


# ----------------------------------------------------------------- subcommands


def test_list_catalog_text(capsys):
    code, out, _ = _run(["list-catalog"], capsys)
    assert code == 0
    assert len(out.splitlines()) - 1 >= 12


def test_list_catalog_json_family(capsys):
    code, out, _ = _run(["list-catalog", "--family", "power", "--json"], capsys)
    entries = json.loads(out)
    assert code == 0 and len(entries) == 5
    for e in entries:
        assert set(e) >= {"name", "family", "parameter", "domain", "has_profile", "claims"}
        for c in e["claims"]:
            assert set(c) == {"space", "params", "finite", "source", "text"}


def test_check_subcommand_json(capsys):
    code, out, _ = _run(["check", "Gross", "--field", "exp", "--json", "--no-timestamps"],
                        capsys)
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "Holds"
    assert doc["result"]["lhs"] == pytest.approx(doc["result"]["rhs"], rel=1e-6)


def test_scan_single_point(capsys):
    code, out, _ = _run(["scan", "EmbedP", "--alpha", "0.6", "--json", "--no-timestamps"],
                        capsys)
    doc = json.loads(out)
    assert code == 0 and doc["result"]["grid"] == [0.6]
    assert doc["result"]["verdicts"] == ["Diverges"]


def test_solve_subcommand_writes_table(tmp_path, capsys):
    code, out, _ = _run(["solve", "neumann", "--domain", "kind=interval a=-3 b=3", "--h", "0.05",
                         "--field", "constant1", "--center", "--out", str(tmp_path),
                         "--no-timestamps"], capsys)
    assert code == 0 and "Solved" in out
    rows = (tmp_path / "solve_solution.csv").read_text().splitlines()
    assert rows[0] == "x1,u" and len(rows) == 122


def test_solve_incompatible(capsys):
    code, out, _ = _run(["solve", "neumann", "--domain", "kind=interval a=-3 b=3", "--h", "0.05",
                         "--field", "constant1", "--json", "--no-timestamps"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "Incompatible"
    assert doc["result"]["defect"] > 0.9


def test_spectrum_subcommand(capsys):
    code, out, _ = _run(["spectrum", "steklov", "--domain", "kind=interval a=-2 b=2", "--h",
                         "0.01", "--k", "2", "--json", "--no-timestamps"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["constant"] == pytest.approx(1.5625291153730665, rel=1e-4)


def test_spectrum_failure_is_exit_one(capsys):
    code, _, err = _run(["spectrum", "steklov", "--domain", "kind=halfline omega=0", "--h",
                         "0.1"], capsys)
    assert code == cli.EXIT_FAIL and "boundary" in err


def test_bad_command_line_value(capsys):
    code, _, err = _run(["check", "Gross", "--field", "exp", "--p", "x"], capsys)
    assert code == cli.EXIT_CONFIG and "<command line>" in err
