import json

import pytest

from flatcone.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, out


def test_density_closed_form(tmp_path, capsys):
    code, out = run(capsys, "density", "--phi", "pi,pi", "--alpha", "pi,pi", "--format", "csv",
                    "--out", str(tmp_path / "d"))
    assert code == 0
    summary = json.loads(out[-1])
    assert summary["volume"] == pytest.approx(1.5708, abs=1e-4)
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "a,f"
    a, f = map(float, rows[len(rows) // 3].split(","))
    assert f == pytest.approx((1 - (1 - a * a) ** 0.5) / a**2 if a <= 1 else 1 / a**2, rel=1e-3)
    side = json.loads((tmp_path / "d.atoms.json").read_text())
    assert side["atoms"] == [] and side["provenance"]["c0"] == 0.25


def test_density_atom_json(tmp_path, capsys):
    code, out = run(capsys, "density", "--phi", "pi/2,pi/2", "--alpha", "pi", "--out", str(tmp_path / "one"))
    assert code == 0
    d = json.loads((tmp_path / "one.json").read_text())
    assert d["atoms"] == [[pytest.approx(0.5), 1.0]]
    assert d["provenance"]["version"]


def test_density_five_cones(tmp_path, capsys):
    code, out = run(capsys, "density", "--phi", "6pi/5,6pi/5", "--alpha", "4pi/5,4pi/5,4pi/5", "--length",
                    "--out", str(tmp_path / "five"))
    s = json.loads(out[-1])
    assert code == 0
    assert s["mean"] == pytest.approx(0.71, abs=0.03) and s["median"] == pytest.approx(0.76, abs=0.03)
    assert (tmp_path / "five.length.json").exists()


def test_density_is_deterministic(tmp_path, capsys):
    for name in ("x", "y"):
        run(capsys, "density", "--phi", "pi,pi", "--alpha", "pi,pi", "--out", str(tmp_path / name))
    assert (tmp_path / "x.json").read_bytes().replace(b'"x"', b'"y"') == (tmp_path / "y.json").read_bytes()


def test_bad_signature_error_json(capsys):
    code, out = run(capsys, "density", "--phi", "3,3", "--alpha", "1")
    assert code != 0
    assert json.loads(out[-1])["error"] == "gauss_bonnet_violation"


def test_oracle_torus_small(tmp_path, capsys):
    for name in ("a", "b"):
        code, out = run(capsys, "oracle-torus", "--n", "10", "--seed", "4", "--out", str(tmp_path / name))
        assert code == 0
        s = json.loads(out[-1])
        assert "ks" in s and "passed" not in s
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["n"] == 10


def test_geodesic(tmp_path, capsys):
    from importlib.resources import files

    mesh = files("flatcone") / "data" / "tetrahedron.json"
    code, out = run(capsys, "geodesic", str(mesh), "0", "3")
    assert code == 0
    assert json.loads(out[-1])["distance"] == pytest.approx(0.7598, abs=1e-4)
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [[0, 0, 0]], "faces": [[0, 0, 0]]}')
    code, out = run(capsys, "geodesic", str(bad), "0", "1")
    assert code != 0 and json.loads(out[-1])["error"] == "malformed_surface"


def test_calibrate(capsys):
    code, out = run(capsys, "calibrate")
    assert code == 0 and json.loads(out[-1])["c0"] == pytest.approx(0.25, abs=1e-6)
    code = main(["calibrate", "--beta-nodes", "16"])
    captured = capsys.readouterr()
    assert code == 0 and "warning" in captured.err
    code, out = run(capsys, "calibrate", "--no-anchor")
    assert code != 0 and json.loads(out[-1])["error"] == "calibration_error"


def test_selftest_fault_injection(capsys):
    code, out = run(capsys, "selftest", "--quick", "--c0", "1")
    assert code == 1
    assert "C1" in json.loads(out[-1])["failed"]


def test_selftest_quick_runs_fast_checks(capsys):
    code, out = run(capsys, "selftest", "--quick")
    keys = {line.split()[0] for line in out[1:-1]}
    assert {"C4", "C5", "C9"}.isdisjoint(keys)
    assert json.loads(out[-1])["failed"] == ["C6"]
