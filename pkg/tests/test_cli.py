import json
import subprocess
import sys

import numpy as np
import pytest

from hessquo.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    ConfigError,
    build_problem,
    load_config,
    main,
    parse_config,
)

MANUFACTURED = {
    "problem": {
        "dimension": 2,
        "resolution": 16,
        "operator": {"k": 2, "l": 1, "gamma": 1.0, "sign": 1},
        "f": "1.5",
        "phi": "n1*x1 + n2*x2 + z - (x1^2 + x2^2)/2",
        "phi_z": "1",
        "subsolution": "(x1^2 + x2^2)/2 - 1",
    },
    "solver": {"tol_r": 1e-10},
    "output": {"field_dump": True},
}


def write(tmp_path, name, body):
    path = tmp_path / f"{name}.json"
    path.write_text(body if isinstance(body, str) else json.dumps(body, indent=1))
    return str(path)


def with_changes(**sections):
    cfg = json.loads(json.dumps(MANUFACTURED))
    for sec, upd in sections.items():
        cfg.setdefault(sec, {}).update(upd)
    return cfg


@pytest.fixture(autouse=True)
def report_dir(tmp_path, monkeypatch):
    out = tmp_path / "reports"
    monkeypatch.setenv("HESSQUO_REPORT_DIR", str(out))
    return out


def test_round_trip_identity():
    cfg = parse_config(json.dumps(MANUFACTURED))
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_defaults_are_filled():
    cfg = parse_config(json.dumps({"problem": {"dimension": 3, "f": 1, "phi": "z", "phi_z": "1"}}))
    assert cfg.problem.operator.n == 3 and cfg.problem.f == "1.0"
    assert cfg.solver.eps0 == 1e-2 and cfg.output.directory == "reports"


@pytest.mark.parametrize(
    "body, match",
    [
        ('{"problem": {"dimension": 2,\n "f": }', "line 2, column"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z"}}', "phi_z"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z", "phi_z": "1", "colour": 1}}', "colour"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z", "phi_z": "1"}, "extra": {}}', "extra"),
        ('{"problem": {"dimension": 4, "f": "1", "phi": "z", "phi_z": "1"}}', "dimension"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "w", "phi_z": "1"}}', "unknown name"),
        ('{"problem": {"dimension": 2, "f": "1/x1", "phi": "z", "phi_z": "1"}}', "not finite"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z", "phi_z": "1"}, "solver": {"max_iter": 0}}', "max_iter"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z", "phi_z": "1"}, "solver": {"max_iter": 2.5}}', "integer"),
        ('{"problem": {"dimension": 2, "f": "1", "phi": "z", "phi_z": "1"}, "output": {"field_dump": 1}}', "true or false"),
        ('{"problem": {"dimension": 3, "f": "1", "phi": "z", "phi_z": "1", "operator": {"k": 3}}}', "k < n"),
    ],
)
def test_config_errors(body, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(body)


def test_data_errors_surface_at_build():
    cfg = parse_config(json.dumps(with_changes(problem={"f": "x1 - 0.5"})))
    with pytest.raises(ConfigError, match="nonnegative"):
        build_problem(cfg)


def test_solve_writes_reports(tmp_path, report_dir, capsys):
    path = write(tmp_path, "manu", MANUFACTURED)
    assert main(["solve", path]) == EXIT_OK
    summary = json.loads((report_dir / "manu.json").read_text())
    assert summary["converged"] and summary["mode"] == "solve" and len(summary["stages"]) == 1
    assert summary["stages"][0]["final_residual"] <= 1e-10
    assert summary["comparison"]["holds"]
    rows = (report_dir / "manu_convergence.csv").read_text().splitlines()
    assert rows[0] == "iteration,residual,step" and rows[1].endswith(",")
    field = (report_dir / "manu_field.csv").read_text().splitlines()
    assert field[0] == "x1,x2,u,|Du|,maxabs_D2u" and len(field) - 1 == 17**2
    u = np.loadtxt(report_dir / "manu_field.csv", delimiter=",", skiprows=1)
    assert np.abs(u[:, 2] - 0.5 * (u[:, 0] ** 2 + u[:, 1] ** 2)).max() < 1e-9
    assert "converged" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path, report_dir):
    path = write(tmp_path, "manu", MANUFACTURED)
    names = ["manu.json", "manu_convergence.csv", "manu_field.csv"]
    assert main(["solve", path]) == EXIT_OK
    first = [(report_dir / n).read_bytes() for n in names]
    assert main(["solve", path]) == EXIT_OK
    assert [(report_dir / n).read_bytes() for n in names] == first


def test_sweep_reports_every_stage(tmp_path, report_dir):
    cfg = {
        "problem": {
            "dimension": 2,
            "resolution": 16,
            "operator": {"k": 2, "l": 1, "sign": 1},
            "f": "(x1 - 0.5)^2",
            "phi": "z",
            "phi_z": "1",
        },
        "solver": {"eps0": 1e-2, "eps_final": 1e-6},
    }
    assert main(["sweep", write(tmp_path, "deg", cfg)]) == EXIT_OK
    summary = json.loads((report_dir / "deg.json").read_text())
    assert [s["epsilon"] for s in summary["stages"]] == [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    assert all(s["converged"] for s in summary["stages"])
    assert len(list(report_dir.glob("deg_convergence_stage*.csv"))) == 5


def test_exit_codes(tmp_path):
    good = write(tmp_path, "good", MANUFACTURED)
    assert main(["solve", write(tmp_path, "bad", "{")]) == EXIT_CONFIG
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    starved = write(tmp_path, "starved", with_changes(problem={"f": "(x1 - 0.5)^2"}, solver={"max_iter": 1}))
    assert main(["solve", starved]) == EXIT_SOLVER
    assert main(["solve", good, starved]) == EXIT_SOLVER
    assert main(["solve", good, starved, write(tmp_path, "bad", "{")]) == EXIT_CONFIG
    negative = write(tmp_path, "neg", with_changes(problem={"f": "x1 - 0.5"}))
    assert main(["solve", negative]) == EXIT_CONFIG


def test_check_subsolution(tmp_path, report_dir):
    path = write(tmp_path, "manu", MANUFACTURED)
    assert main(["check-subsolution", path]) == EXIT_OK
    body = json.loads((report_dir / "manu_subsolution.json").read_text())
    assert body["passed"] and body["boundary_mode"] == "inequality"
    assert main(["check-subsolution", "--boundary", "equality", path]) == EXIT_SOLVER
    plain = json.loads(json.dumps(MANUFACTURED))
    del plain["problem"]["subsolution"]
    assert main(["check-subsolution", write(tmp_path, "plain", plain)]) == EXIT_CONFIG


def test_parallel_jobs(tmp_path, report_dir):
    paths = [write(tmp_path, f"run{i}", with_changes(problem={"resolution": 8 + 4 * i})) for i in range(3)]
    assert main(["solve", "--jobs", "3", *paths]) == EXIT_OK
    assert sorted(p.name for p in report_dir.glob("run?.json")) == ["run0.json", "run1.json", "run2.json"]


def test_show_config(tmp_path, capsys):
    path = write(tmp_path, "manu", MANUFACTURED)
    assert main(["solve", "--show-config", path]) == EXIT_OK
    printed = capsys.readouterr().out
    shown = printed[: printed.index("\n}\n") + 2]
    assert parse_config(shown) == load_config(path)


def test_verify_subcommand(tmp_path):
    out = tmp_path / "verify.json"
    assert main(["verify", "--scale", "0.01", "--json", str(out)]) == EXIT_OK
    names = [r["name"] for r in json.loads(out.read_text())]
    assert len(names) == 6
    assert main(["verify", "--scale", "0"]) == EXIT_CONFIG


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hessquo.cli", "solve", str(tmp_path / "nope.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_CONFIG and "config error" in proc.stderr
