import csv
import io
import json
import xml.etree.ElementTree as ET

import pytest

from psprog import cli
from psprog import polytope as poly


def run(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as e:
        code = e.code
    out, err = capsys.readouterr()
    return code, out, err


def test_volume_text(capsys):
    code, out, _ = run(["volume", "--k", "3", "--d", "1"], capsys)
    assert code == cli.EXIT_OK and out.strip() == "1/2"


def test_volume_csv_and_json(capsys):
    code, out, _ = run(["volume", "--k", "3..5", "--d", "1", "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["volume"] for r in rows] == ["1/2", "1/3", "1/4"]
    assert rows[0]["volume_dec"] == "0.5"
    code, out, _ = run(["volume", "--k", "4", "--d", "2", "--format", "json"], capsys)
    assert json.loads(out)["volumes"][0]["volume"] == "8/27"


@pytest.mark.parametrize("argv", [
    ["volume", "--k", "3", "--d", "5"],
    ["volume", "--k", "x"],
    ["density", "--n", "100"],
    ["density", "--f", "pow:2", "--k", "3", "--n", "100"],
    ["discrepancy", "--alpha", "3/2", "--n", "3000", "--mode", "exact"],
    ["sweep", "--alpha-grid", "3/2,5/4"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_one(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_USAGE
    assert err


def test_computation_failure_exits_two(capsys, monkeypatch):
    def boom(*a, **k):
        raise poly.UnboundedPolytopeError("unbounded")

    monkeypatch.setattr(poly, "volume_exact", boom)
    code, _, err = run(["volume", "--k", "3", "--d", "1"], capsys)
    assert code == cli.EXIT_COMPUTE and "computation failed" in err


def test_detect_reports_below_regime(capsys):
    code, out, _ = run(["detect", "--f", "pow:3/2", "--k", "3", "--n", "2"], capsys)
    assert code == 0 and "BelowRegime" in out and "in_P=True" in out


def test_detect_json_range(capsys):
    code, out, _ = run(["detect", "--f", "pow:3/2", "--k", "3", "--n", "10000..10020", "--format", "json"], capsys)
    data = json.loads(out)
    assert code == 0 and len(data["results"]) == 21


@pytest.mark.parametrize("argv", [
    ["density", "--f", "pow:3/2", "--k", "3", "--n", "1e3,1e4"],
    ["short", "--f", "pow:3/2", "--k", "3", "--n", "1e5", "--l", "1000"],
    ["vary-r", "--alpha", "3/2", "--k", "3", "--n", "200"],
    ["gaps", "--alpha", "3/2", "--k", "4", "--x", "1000,5000"],
    ["sweep", "--k", "3", "--r", "1", "--n", "200", "--alpha-grid", "1+i/10,i=1..9"],
    ["discrepancy", "--alpha", "3/2", "--n", "1000", "--l", "64", "--h", "4"],
    ["xlogx-band", "--n", "1000"],
    ["detect", "--f", "pow:5/2", "--k", "4", "--n", "50000..50005"],
])
def test_every_subcommand_in_every_format(argv, capsys):
    for fmt in ("text", "json", "csv"):
        code, out, _ = run(argv + ["--format", fmt], capsys)
        assert code == 0, fmt
        assert out.strip()
        if fmt == "json":
            json.loads(out)
        elif fmt == "csv":
            rows = list(csv.reader(io.StringIO(out)))
            assert len(rows) >= 2 and len({len(r) for r in rows}) == 1


def test_known_values_through_cli(capsys):
    _, out, _ = run(["density", "--f", "pow:3/2", "--k", "3", "--n", "1e4", "--format", "json"], capsys)
    assert json.loads(out)["rows"][0]["count"] == 5050
    _, out, _ = run(["short", "--f", "pow:3/2", "--k", "3", "--n", "1e6", "--l", "1e4", "--format", "json"], capsys)
    assert json.loads(out)["count"] == 5014


def test_sweep_outputs(tmp_path, capsys):
    csv_path, svg_path = tmp_path / "sweep.csv", tmp_path / "sweep.svg"
    code, _, _ = run(["sweep", "--k", "3", "--r", "1", "--n", "300", "--format", "csv",
                      "--output", str(csv_path), "--svg", str(svg_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(csv_path, encoding="utf-8")))
    assert len(rows) == 999
    root = ET.parse(svg_path).getroot()
    assert root.tag.endswith("svg")


def test_sweep_threads_do_not_change_output(tmp_path, capsys):
    outs = []
    for t in ("1", "3"):
        p = tmp_path / f"s{t}.csv"
        run(["sweep", "--k", "3", "--r", "1", "--n", "300", "--alpha-grid", "1+i/50,i=1..49", "--format", "csv",
             "--threads", t, "--output", str(p)], capsys)
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_manifest_and_replay(tmp_path, capsys):
    out_path = tmp_path / "gaps.json"
    svg_path = tmp_path / "gaps.svg"
    man = tmp_path / "run.json"
    code, _, _ = run(["gaps", "--alpha", "3/2", "--k", "4", "--x", "1000..100000:5", "--format", "json",
                      "--output", str(out_path), "--svg", str(svg_path), "--manifest", str(man)], capsys)
    assert code == 0
    m = json.loads(man.read_text())
    assert {"config", "version", "started", "finished", "input_hash", "outputs"} <= set(m)
    assert set(m["outputs"]) == {str(out_path), str(svg_path)}
    first = out_path.read_bytes()
    code, _, err = run(["replay", str(man)], capsys)
    assert code == 0 and "byte-identically" in err
    assert out_path.read_bytes() == first
    # tampering with a recorded checksum is detected
    m["outputs"][str(out_path)] = "0" * 64
    man.write_text(json.dumps(m))
    code, _, err = run(["replay", str(man)], capsys)
    assert code == cli.EXIT_COMPUTE and "mismatch" in err


def test_replay_missing_manifest(tmp_path, capsys):
    code, _, _ = run(["replay", str(tmp_path / "absent.json")], capsys)
    assert code == cli.EXIT_USAGE


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# density run\nf = pow:3/2\nk = 3\nn = 1e4\n")
    code, out, _ = run(["density", "--config", str(cfg), "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["rows"][0]["count"] == 5050
    # flags override the file
    code, out, _ = run(["density", "--config", str(cfg), "--n", "1e3", "--format", "json"], capsys)
    assert json.loads(out)["rows"][0]["N"] == 1000
    cfg.write_text("f = pow:3/2\nbogus = 1\n")
    code, _, _ = run(["density", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_USAGE


def test_outputs_have_no_timestamps(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(["xlogx-band", "--n", "1000", "--format", "json", "--output", str(p)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_svg_ignored_for_subcommands_without_plot(tmp_path, capsys):
    code, _, err = run(["volume", "--k", "3", "--d", "1", "--svg", str(tmp_path / "x.svg")], capsys)
    assert code == 0 and "ignored" in err
