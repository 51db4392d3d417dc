import csv
import subprocess
import sys

import pytest

from confderham.catalog import list_catalog
from confderham.cli import main
from confderham.scenarios import ConfigError, parse_config_text

AXIOMS = """\
[defaults]
seed = 7

[axioms]
experiment = algebra_axioms
space = euclidean_box
resolution = 2
samples = 40
"""

CAPACITY = """\
[annulus]
experiment = capacity_table
n = 2
outer = 2.718281828459045
resolution = 8
layers = 16
{extra}
"""


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("text, line, fragment", [
    ("[a]\nexperiment = nope\n", 2, "unknown experiment"),
    ("[a]\nexperiment = algebra_axioms\nsamples = 10\nbogus = 1\n", 4, "unknown key"),
    ("[a]\nexperiment = algebra_axioms\nsamples = ten\n", 3, "invalid value"),
    ("[a]\nexperiment = polar\neps = 1e-2, 1e-1, 1e-4\n", 3, "eps"),
])
def test_config_errors_report_line(tmp_path, capsys, text, line, fragment):
    assert main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"c.ini:{line}:" in err and fragment in err


def test_missing_config_and_unknown_scenario(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.ini")]) == 2
    path = write(tmp_path, AXIOMS)
    assert main(["run", path, "--scenario", "nope", "--out", str(tmp_path / "o")]) == 2
    assert "nope" in capsys.readouterr().err
    assert main(["run", path, "--jobs", "0", "--out", str(tmp_path / "o")]) == 2
    assert main([]) == 2


def test_parse_config_text_overrides_seed():
    scen = parse_config_text(AXIOMS, "inline", seed=99)
    assert [s.name for s in scen] == ["axioms"] and scen[0].seed == 99
    assert parse_config_text(AXIOMS, "inline")[0].seed == 7
    with pytest.raises(ConfigError):
        parse_config_text("[a]\n", "inline")


def test_list_catalog(capsys):
    assert main(["--list-catalog"]) == 0
    assert capsys.readouterr().out.split() == list(list_catalog())


def test_algebra_axioms_run_passes(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, AXIOMS), "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text()
    assert "PASS" in summary and summary.rstrip().endswith("passed")
    assert "FAIL" not in capsys.readouterr().out


def test_outputs_are_deterministic(tmp_path):
    path = write(tmp_path, AXIOMS + CAPACITY.format(extra=""))
    main(["run", path, "--out", str(tmp_path / "a")])
    main(["run", path, "--out", str(tmp_path / "b"), "--jobs", "2"])
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_capacity_table_row(tmp_path):
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, CAPACITY.format(extra="")), "--out", str(out)]) == 0
    rows = read_csv(out / "annulus.csv")
    head, body = rows[0], rows[1:]
    assert head[:3] == ["scenario", "seed", "stage"]
    assert len(body) == 1
    value = float(body[0][head.index("value")])
    assert value == pytest.approx(6.2832, rel=0.05)


def test_stages_are_rows_in_order(tmp_path):
    out = tmp_path / "o"
    text = CAPACITY.format(extra="").replace("outer = 2.718281828459045", "outer = 2.0, 4.0")
    main(["run", write(tmp_path, text), "--out", str(out)])
    body = read_csv(out / "annulus.csv")[1:]
    assert [r[2] for r in body] == ["0", "1"]


def test_failing_check_exits_one(tmp_path, capsys):
    text = CAPACITY.format(extra="tol_rel = 1e-9")
    assert main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_empty_series_writes_header_only(tmp_path):
    # a Sobolev series whose stages all fail still produces its CSV with a header
    text = "[s]\nexperiment = sobolev_series\nfamily = euclidean\nsizes = 1, 2, 3\nresolution = 0\n"
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, text), "--out", str(out)]) == 1
    rows = read_csv(out / "s.csv")
    assert rows[0][:3] == ["scenario", "seed", "stage"] and len(rows) == 1
    assert "[error]" in (out / "summary.txt").read_text()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "confderham.cli", "--list-catalog"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "poincare_ball" in proc.stdout
