import json

import numpy as np
import pytest

from perturba.cli import main
from perturba.matio import load_matrix, read_json, save_matrix


def rotation(th):
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]], dtype=complex)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_project_roundtrip(workdir):
    save_matrix("b.json", np.diag([0.1, 0.9]).astype(complex))
    assert main(["project", "b.json"]) == 0
    out = load_matrix("b.out.json")
    np.testing.assert_allclose(out, np.diag([0.0, 1.0]), atol=1e-13)
    cert = read_json("b.cert.json")
    assert cert["correction_distance"] == pytest.approx(0.1, abs=1e-12)


def test_project_hypothesis_failure_exit_2(workdir, capsys):
    save_matrix("bad.json", np.diag([0.5]).astype(complex))
    assert main(["project", "bad.json"]) == 2
    err = capsys.readouterr().err
    assert "hypothesis failure" in err and "1/4" in err or "0.25" in err


def test_missing_file_exit_1(workdir):
    assert main(["project", "nope.json"]) == 1


def test_invalid_json_exit_1(workdir):
    (workdir / "bad.json").write_text("{not json")
    assert main(["project", "bad.json"]) == 1


def test_triangularize_command(workdir):
    save_matrix("r.json", rotation(0.1))
    assert main(["triangularize", "r.json", "--composition", "1,1"]) == 0
    out = load_matrix("r.out.json")
    np.testing.assert_allclose(out, np.eye(2), atol=1e-12)


def test_pisofix_command(workdir):
    save_matrix("v.json", np.diag([1.0, 0.9, 0.0]).astype(complex))
    assert main(["pisofix", "v.json", "-o", "vhat.json", "--cert", "c.json"]) == 0
    np.testing.assert_allclose(load_matrix("vhat.json"), np.diag([1.0, 1.0, 0.0]), atol=1e-13)


def test_conjugate_command(workdir):
    p = np.diag([1.0, 0.0]).astype(complex)
    r = rotation(0.2)
    q = r @ p @ r.conj().T
    save_matrix("p.json", p)
    save_matrix("q.json", q)
    assert main(["conjugate", "p.json", "q.json", "-o", "u.json", "--cert", "c.json"]) == 0
    u = load_matrix("u.json")
    assert np.linalg.norm(q - u @ p @ u.conj().T, 2) <= 1e-12
    cert = read_json("c.json")
    assert cert["correction_distance"] <= cert["bound_claimed"] + 1e-13


def test_conjugate_too_far_exit_2(workdir):
    save_matrix("p.json", np.diag([1.0, 0.0]).astype(complex))
    save_matrix("q.json", np.diag([0.0, 1.0]).astype(complex))
    assert main(["conjugate", "p.json", "q.json"]) == 2


def test_normfix_command(workdir):
    v = np.array([[0, 0.98j], [0.99, 0]], dtype=complex)
    save_matrix("v.json", v)
    assert main(["normfix", "v.json"]) == 0
    out = load_matrix("v.out.json")
    np.testing.assert_allclose(out, np.array([[0, 1j], [1.0, 0]]), atol=1e-12)


def test_distance_command(workdir, capsys):
    save_matrix("x.json", rotation(0.1))
    assert main(["distance", "x.json", "--composition", "1,1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["triangular_distance"] == pytest.approx(np.sin(0.1), abs=1e-12)


def test_experiment_determinism_and_outputs(workdir):
    cfgtext = "experiment=triangularize-sweep\ncomposition=1,1\nmultiplicity=1\n" \
              "epsilons=1e-2\ntrials=2\nseed=9\n"
    (workdir / "exp.cfg").write_text(cfgtext)
    assert main(["experiment", "--config", "exp.cfg", "-o", "a.csv",
                 "--manifest", "a.manifest.json", "--no-figure"]) == 0
    assert main(["experiment", "--config", "exp.cfg", "-o", "b.csv",
                 "--manifest", "b.manifest.json", "--no-figure"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert (workdir / "a.manifest.json").read_bytes() == (workdir / "b.manifest.json").read_bytes()
    header = (workdir / "a.csv").read_text().splitlines()[0]
    assert header == "experiment,trial,epsilon,defect_in,recovery_distance," \
                     "structural_residual,runtime_ms,status"


def test_experiment_zero_trials_header_only(workdir):
    assert main(["experiment", "--experiment", "stability", "--trials", "0",
                 "-o", "empty.csv", "--no-figure"]) == 0
    lines = (workdir / "empty.csv").read_text().splitlines()
    assert len(lines) == 1


def test_experiment_unknown_name_exit_1(workdir):
    assert main(["experiment", "--experiment", "bogus", "-o", "x.csv"]) == 1


def test_experiment_env_seed_and_flag_priority(workdir, monkeypatch):
    (workdir / "exp.cfg").write_text(
        "experiment=triangularize-sweep\ncomposition=1,1\nepsilons=1e-2\ntrials=1\nseed=1\n")
    main(["experiment", "--config", "exp.cfg", "-o", "s1.csv", "--no-figure"])
    monkeypatch.setenv("PERTURBA_SEED", "2")
    main(["experiment", "--config", "exp.cfg", "-o", "s2.csv", "--no-figure"])
    assert (workdir / "s1.csv").read_bytes() != (workdir / "s2.csv").read_bytes()
    # explicit flag wins over the environment
    main(["experiment", "--config", "exp.cfg", "--seed", "1", "-o", "s3.csv", "--no-figure"])
    assert (workdir / "s1.csv").read_bytes() == (workdir / "s3.csv").read_bytes()


def test_experiment_figure_rendered(workdir):
    assert main(["experiment", "--experiment", "triangularize-sweep",
                 "--composition", "1,1", "--epsilons", "1e-2,1e-3", "--trials", "2",
                 "-o", "fig.csv"]) == 0
    png = (workdir / "fig.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


@pytest.mark.parametrize("name,extra", [
    ("normfix-sweep", ["--pattern", "full3", "--multiplicity", "1"]),
    ("regular-stability", ["--pattern", "t2", "--multiplicity", "2"]),
])
def test_other_experiments_smoke(workdir, name, extra):
    assert main(["experiment", "--experiment", name, "--epsilons", "1e-2",
                 "--trials", "2", *extra, "-o", "s.csv", "--no-figure"]) == 0
    lines = (workdir / "s.csv").read_text().splitlines()
    assert len(lines) == 3
    assert all(line.endswith("ok") for line in lines[1:])


def test_stability_experiment_spec_example(workdir):
    # composition (2,2,2), multiplicity 2, three epsilons, 50 trials, seed 42:
    # 150 rows with per-epsilon medians monotone decreasing
    assert main(["experiment", "--experiment", "stability", "--composition", "2,2,2",
                 "--multiplicity", "2", "--epsilons", "1e-2,1e-3,1e-4",
                 "--trials", "50", "--seed", "42", "-o", "big.csv", "--no-figure"]) == 0
    lines = (workdir / "big.csv").read_text().splitlines()[1:]
    assert len(lines) == 150
    med = {}
    for eps in ("0.01", "0.001", "0.0001"):
        vals = [float(l.split(",")[4]) for l in lines if l.split(",")[2] == eps]
        assert len(vals) == 50
        med[eps] = sorted(vals)[25]
    assert med["0.0001"] < med["0.001"] < med["0.01"]


def test_tower_experiment_rows(workdir):
    assert main(["experiment", "--experiment", "tower", "--pattern", "t2",
                 "--multiplicity", "2", "--depth", "3", "--epsilons", "0.01",
                 "--trials", "1", "-o", "t.csv", "--no-figure"]) == 0
    lines = (workdir / "t.csv").read_text().splitlines()
    assert len(lines) == 3  # header + one row per recovered level
    assert all(line.endswith("ok") for line in lines[1:])
