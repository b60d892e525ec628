import json

import pytest

from annulus_turing import cli
from annulus_turing.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_STABLE, EXIT_USAGE, main

ROW1 = ["--a", "0.2", "--d", "13", "--R", "4", "--delta", "1.05"]


def read_json(path):
    return json.loads(path.read_text())


def read_csv_meta(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# ")
    return json.loads(first[2:])


def test_no_command_is_usage_error(capsys):
    assert main([]) == EXIT_USAGE


def test_bad_option(capsys):
    assert main(["critical", "--bogus", "1"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_eigs_table(tmp_path):
    out = tmp_path / "eigs.csv"
    assert main(["eigs", "--delta", "2", "--n-max", "3", "--j-max", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "n,j,eig,norm"
    rows = [l.split(",") for l in lines[2:]]
    assert len(rows) == 8
    assert rows[0][:3] == ["0", "1", "0.0"]
    assert read_csv_meta(out)["command"] == "eigs"


def test_critical_json_roundtrip(tmp_path):
    out = tmp_path / "crit.json"
    assert main(["critical", *ROW1, "--out", str(out)]) == EXIT_OK
    rep = read_json(out)
    assert rep["status"] == "onset"
    assert (rep["critical"]["n_c"], rep["critical"]["j_c"]) == (2, 1)
    assert rep["coeff_scaled"] == pytest.approx(73.5557, rel=0.05)
    assert rep["type"] == "CatastrophicII"
    assert rep["normal_form_type"] == "ContinuousI"
    assert rep["provenance"]["params"]["a"] == 0.2
    assert json.loads(json.dumps(rep)) == rep


def test_critical_stable_exit(tmp_path):
    out = tmp_path / "crit.json"
    code = main(["critical", "--a", "0.8", "--d", "3", "--R", "4", "--delta", "2",
                 "--out", str(out)])
    assert code == EXIT_STABLE
    assert read_json(out)["status"] == "stable"


def test_critical_bad_params():
    assert main(["critical", "--a", "-1", "--d", "3", "--R", "4", "--delta", "2"]) == EXIT_USAGE
    assert main(["critical", "--a", "0.1", "--d", "100", "--R", "4", "--delta", "2"]) \
        == EXIT_USAGE


def test_config_key_value_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# row 1\na = 0.2\nd = 13\nR = 4\ndelta = 1.05\n")
    out = tmp_path / "a.json"
    assert main(["--config", str(cfg), "critical", "--out", str(out)]) == EXIT_OK
    assert read_json(out)["critical"]["n_c"] == 2
    # a flag overrides the file
    out2 = tmp_path / "b.json"
    assert main(["--config", str(cfg), "critical", "--d", "80", "--out", str(out2)]) == EXIT_OK
    assert read_json(out2)["provenance"]["params"]["d"] == 80.0
    assert read_json(out2)["critical"]["n_c"] == 1


def test_config_json(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"a": 0.2, "d": 13, "R": 4, "delta": 1.05, "tail-tol": 1e-9}))
    out = tmp_path / "c.json"
    assert main(["--config", str(cfg), "critical", "--out", str(out)]) == EXIT_OK
    assert read_json(out)["provenance"]["options"]["tail_tol"] == 1e-9


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("a = 0.2\nnot_an_option = 3\n")
    assert main(["--config", str(bad), "critical"]) == EXIT_USAGE
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["--config", str(broken), "critical"]) == EXIT_USAGE
    noeq = tmp_path / "noeq.cfg"
    noeq.write_text("a 0.2\n")
    assert main(["--config", str(noeq), "critical"]) == EXIT_USAGE


def test_load_config_types(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("n-max = 5\n")
    assert cli.load_config(p) == {"n_max": "5"}


def test_sweep_outputs_deterministic(tmp_path):
    args = ["sweep", "--R", "4", "--delta", "2", "--a-steps", "4", "--d-steps", "3",
            "--d-min", "20", "--d-max", "150"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--workers", "1", "--out", str(b)]) == EXIT_OK
    body = lambda p: p.read_text().splitlines()[1:]
    assert body(a) == body(b)
    summary = read_json(a.with_suffix(".json"))
    assert "labels" in summary


def test_whorlcount(tmp_path):
    out = tmp_path / "w.json"
    assert main(["whorlcount", "--steps", "201", "--out", str(out)]) == EXIT_OK
    seq = read_json(out)["sequence"]
    assert seq and all(isinstance(x, int) for x in seq)


def test_modeplot(tmp_path):
    out, field = tmp_path / "m.json", tmp_path / "m.csv"
    assert main(["modeplot", "--nr", "100", "--ntheta", "360", "--out", str(out),
                 "--field-out", str(field)]) == EXIT_OK
    assert read_json(out)["positive_patches"] == 18
    assert len(field.read_text().splitlines()) == 2 + 100 * 360


def test_simulate_deterministic(tmp_path):
    args = ["simulate", *ROW1, "--lam-offset", "0.01", "--horizon", "1", "--dt", "0.1",
            "--nr", "17", "--ntheta", "32", "--seed", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    for name in ("timeseries.csv", "snapshot.csv", "run.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    meta = read_json(a / "run.json")
    assert meta["final_time"] == pytest.approx(1.0)


def test_simulate_zero_start_stays_zero(tmp_path):
    out = tmp_path / "z"
    assert main(["simulate", *ROW1, "--lam", "0.6", "--amplitude", "0", "--horizon", "1",
                 "--dt", "0.1", "--nr", "17", "--ntheta", "32", "--out", str(out)]) == EXIT_OK
    rows = out.joinpath("timeseries.csv").read_text().splitlines()[2:]
    assert all(float(r.split(",")[1]) == 0.0 for r in rows)


def test_simulate_mode_seed(tmp_path):
    out = tmp_path / "m"
    assert main(["simulate", *ROW1, "--lam-offset", "0.01", "--mode", "2,1",
                 "--amplitude", "1e-6", "--horizon", "2", "--dt", "0.1", "--nr", "17",
                 "--ntheta", "32", "--out", str(out)]) == EXIT_OK
    lines = out.joinpath("timeseries.csv").read_text().splitlines()
    assert lines[1].endswith("modal")


def test_simulate_blowup_partial_output(tmp_path):
    out = tmp_path / "blow"
    code = main(["simulate", *ROW1, "--lam", "0.6", "--amplitude", "5", "--horizon", "50",
                 "--dt", "0.05", "--nr", "17", "--ntheta", "32", "--out", str(out)])
    assert code == EXIT_NUMERICAL
    meta = read_json(out / "run.json")
    assert "blowup" in meta
    assert (out / "snapshot.csv").exists() and (out / "timeseries.csv").exists()


def test_simulate_requires_lambda(tmp_path):
    assert main(["simulate", *ROW1, "--out", str(tmp_path / "x")]) == EXIT_USAGE


def test_simulate_explicit_guard(tmp_path):
    code = main(["simulate", *ROW1, "--lam", "0.6", "--scheme", "euler", "--dt", "0.1",
                 "--nr", "17", "--ntheta", "32", "--out", str(tmp_path / "e")])
    assert code == EXIT_USAGE


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "annulus_turing", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
