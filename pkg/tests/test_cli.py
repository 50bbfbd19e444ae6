import csv
import json

import pytest

from afspin import cli, datasets


@pytest.fixture(scope="module")
def flat_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "flat.afid"
    assert cli.main(["generate", "flat", "--n", "20", "--r-outer", "4", "--output", str(path)]) == 0
    return path


def test_generate_records_parameters(tmp_path, capsys):
    path = tmp_path / "s.afid"
    assert cli.main(["generate", "schwarzschild", "--m", "1", "--n", "16", "--r-outer", "6",
                     "--output", str(path)]) == 0
    assert datasets.load(path).provenance["params"]["m"] == 1.0
    path = tmp_path / "by.afid"
    assert cli.main(["generate", "bowen-york", "--p", "0,0,0.5", "--n", "16", "--r-outer", "6",
                     "--output", str(path)]) == 0
    assert "max |tr h|" in capsys.readouterr().out


def test_generate_unknown(tmp_path):
    assert cli.main(["generate", "kerr", "--output", str(tmp_path / "x")]) == cli.EXIT_USAGE


def test_verify_flat_all_checks(flat_file, tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["verify", "--input", str(flat_file), "--output", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == "report-v1"
    assert rep["summary"]["pass"]
    explicit = [c for c in rep["checks"] if c["explicit_constant"]]
    assert explicit and all(c["pass"] and c["margin"] >= -c["tolerance"] for c in explicit)
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert any(r["series"] == "adm" for r in rows)


def test_verify_is_byte_identical(flat_file, tmp_path):
    args = ["verify", "--input", str(flat_file), "--checks", "algebra,adm,pi_norm_bounds", "--seed", "5"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(args + ["--output", str(a)]) == 0
    assert cli.main(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_truncated_file(flat_file, tmp_path, capsys):
    bad = tmp_path / "bad.afid"
    bad.write_bytes(flat_file.read_bytes()[:-100])
    assert cli.main(["verify", "--input", str(bad)]) == cli.EXIT_IO
    assert "truncated payload" in capsys.readouterr().err


def test_verify_missing_file(tmp_path):
    assert cli.main(["verify", "--input", str(tmp_path / "none.afid")]) == cli.EXIT_IO


def test_verify_violation_exit_code(flat_file, tmp_path):
    # a deliberately wrong isoperimetric constant breaks the Sobolev inequality
    code = cli.main(["verify", "--input", str(flat_file), "--checks", "sobolev", "--k", "1000",
                     "--output", str(tmp_path / "r.json")])
    assert code == cli.EXIT_VIOLATION


def test_config_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[run]\nchecks = adm, sobolev\nseed = 4\n[estimates]\nk = 4.5\nradii = 1,2,3\n"
                    "eta = 1.0, 2.0\n[solver]\nrtol = 1e-9\n")
    cfg = cli.load_config(path)
    assert cfg.checks == ("adm", "sobolev") and cfg.seed == 4 and cfg.k == 4.5
    assert cfg.radii == (1.0, 2.0, 3.0) and cfg.eta == (1.0, 2.0) and cfg.rtol == 1e-9
    with pytest.raises(ValueError):
        cli.load_config(text="[run]\nchecks = nonsense\n")


def test_convergence_strict_detects_mutation(tmp_path):
    args = ["convergence", "perturbed", "--levels", "24,36", "--r-outer", "3", "--no-solve", "--strict"]
    assert cli.main(args + ["--output", str(tmp_path / "ok.csv")]) == 0
    assert cli.main(args + ["--mutate", "connection", "--output", str(tmp_path / "bad.csv")]) == cli.EXIT_VIOLATION
    rows = list(csv.DictReader(open(tmp_path / "ok.csv")))
    assert float(rows[1]["order_weitzenbock"]) >= 1.8


def test_convergence_flat_skips_order(tmp_path, capsys):
    assert cli.main(["convergence", "flat", "--levels", "16,24", "--no-solve", "--strict"]) == 0
    assert "rounding level" in capsys.readouterr().err


def test_dumps_report_handles_non_finite():
    text = cli.dumps_report({"a": float("inf"), "b": [1, float("nan")]})
    assert json.loads(text) == {"a": None, "b": [1, None]}
