import csv
import math

import numpy as np
import pytest

from sigma_flow_lab import cli


def run(tmp_path, command, *sets, name="out", config=None, seed=None):
    out = tmp_path / name
    argv = [command, "--out", str(out)]
    for s in sets:
        argv += ["--set", s]
    if config is not None:
        argv += ["--config", str(config)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    code = cli.main(argv)
    return code, cli.read_summary(out / "summary.txt"), out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- config -----------------------------------------------------------------

def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# flow run\ngeometry.grid_size = 64\nflow.k = 2   # trailing comment\n"
                    "construct.deltas = 0.2, 0.1\n")
    values = cli.parse_config_text(path.read_text())
    assert values == {"geometry.grid_size": 64, "flow.k": 2, "construct.deltas": (0.2, 0.1)}


@pytest.mark.parametrize("text", ["no equals sign", "unknown.key = 1", "geometry.n = five"])
def test_bad_config_lines(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text(text)


def test_sweep_rows_parse():
    assert cli.parse_rows("2,1,0.1,64; 2,0,0.05,128") == [(2, 1, 0.1, 64), (2, 0, 0.05, 128)]
    assert cli.parse_rows("") == []
    with pytest.raises(cli.ConfigError):
        cli.parse_rows("2,1,0.1")


@pytest.mark.parametrize("setting", ["geometry.n=2", "flow.cfl=3", "geometry.kind=torus",
                                     "initial_profile=square", "flow.k=9"])
def test_invalid_config_exits_two_with_summary(tmp_path, setting):
    code, summary, _ = run(tmp_path, "flow", setting)
    assert code == cli.EXIT_CONFIG
    assert summary["status"] == "config_error" and summary["error.message"]


def test_missing_config_file(tmp_path):
    code, summary, _ = run(tmp_path, "flow", config=tmp_path / "absent.cfg")
    assert code == cli.EXIT_CONFIG and summary["status"] == "config_error"


def test_float_rendering_round_trips():
    x = 0.1 + 0.2
    assert float(cli.fmt(x)) == x
    assert cli.fmt(True) == "true" and cli.fmt(3) == "3"


# --- constants --------------------------------------------------------------

def test_constants_four(tmp_path, capsys):
    code, summary, _ = run(tmp_path, "constants", "constants.n=4", "constants.k=2", "constants.l=1")
    assert code == 0
    assert float(summary["constants.C_MT"]) == pytest.approx(4 * math.pi ** 2, rel=1e-14)
    assert float(summary["constants.quermass_const"]) == pytest.approx(math.sqrt(6) / 4, rel=1e-14)
    assert "39.478" in capsys.readouterr().out


def test_constants_three(tmp_path):
    code, summary, _ = run(tmp_path, "constants", "constants.n=3", "constants.k=1", "constants.l=0")
    assert code == 0
    assert float(summary["constants.C_S_sphere"]) == pytest.approx(3 * (math.pi ** 4 / 2) ** (1 / 3), rel=1e-14)


def test_constants_range_error(tmp_path):
    code, summary, _ = run(tmp_path, "constants", "constants.n=4", "constants.k=1", "constants.l=2")
    assert code == cli.EXIT_CONFIG


# --- flow -------------------------------------------------------------------

def test_flow_converges_and_writes_trace(tmp_path):
    code, summary, out = run(tmp_path, "flow", "geometry.grid_size=64", "flow.conservation_check_every=500")
    assert code == 0 and summary["status"] == "converged"
    assert float(summary["flow.conserved_drift"]) < 1e-4
    header, rows = read_csv(out / "trace.csv")
    assert tuple(header) == cli.TRACE_COLUMNS
    t = np.array([float(r[0]) for r in rows])
    assert np.all(np.diff(t) > 0)
    assert float(rows[-1][header.index("residual")]) < 1e-6


def test_constant_profile_has_one_row(tmp_path):
    code, summary, out = run(tmp_path, "flow", "geometry.grid_size=64", "initial_profile=constant")
    assert code == 0
    _, rows = read_csv(out / "trace.csv")
    assert len(rows) == 1


def test_inadmissible_profile_exits_three(tmp_path):
    code, summary, _ = run(tmp_path, "flow", "geometry.grid_size=64", "amplitude=3")
    assert code == cli.EXIT_STALL
    assert summary["status"] == "cone_violation"
    assert int(summary["error.node"]) >= 0


def test_timeout_exits_three_with_trace(tmp_path):
    code, summary, out = run(tmp_path, "flow", "geometry.grid_size=64", "flow.max_time=0.5")
    assert code == cli.EXIT_STALL and summary["status"] == "timeout"
    assert (out / "trace.csv").exists()


def test_profile_file(tmp_path):
    u = 0.05 * np.cos(np.linspace(0, 2 * np.pi, 64, endpoint=False))
    path = tmp_path / "u.txt"
    np.savetxt(path, u)
    code, summary, _ = run(tmp_path, "flow", "geometry.grid_size=64", "initial_profile=file",
                           f"profile_file={path}")
    assert code == 0
    code, summary, _ = run(tmp_path, "flow", "geometry.grid_size=32", "initial_profile=file",
                           f"profile_file={path}", name="bad")
    assert code == cli.EXIT_CONFIG


def test_replay_is_deterministic(tmp_path):
    sets = ("geometry.grid_size=64", "initial_profile=cosine_band", "amplitude=0.05")
    _, a, out_a = run(tmp_path, "flow", *sets, name="a")
    _, b, out_b = run(tmp_path, "flow", *sets, name="b")
    skip = {"wall_time", "config.output_dir", "files.trace"}
    assert {k: v for k, v in a.items() if k not in skip} == {k: v for k, v in b.items() if k not in skip}
    assert (out_a / "trace.csv").read_text() == (out_b / "trace.csv").read_text()


# --- sweep ------------------------------------------------------------------

def test_empty_sweep(tmp_path):
    code, summary, out = run(tmp_path, "sweep")
    assert code == 0 and summary["rows"] == "0"
    header, rows = read_csv(out / "sweep.csv")
    assert header[0] == "row" and rows == []


def test_sweep_with_workers(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    code, summary, out = run(tmp_path, "sweep", "sweep.rows=2,1,0.1,64;2,1,0.1,128;2,0,0.1,64;2,1,3,64")
    # the slow k=2, l=0 row and the inadmissible last row are reported, not errors
    assert code == 0 and summary["workers"] == "2"
    header, rows = read_csv(out / "sweep.csv")
    status = [r[header.index("status")] for r in rows]
    assert status == ["converged", "converged", "timeout", "cone_violation"]
    r_kl = [float(r[header.index("r_kl")]) for r in rows[:2]]
    assert r_kl[0] == pytest.approx(r_kl[1], rel=1e-4)
    assert all((out / f"row_{i:03d}" / "summary.txt").exists() for i in range(4))


# --- construct and verify ---------------------------------------------------

def test_construct_rejects_supercritical_index(tmp_path):
    code, summary, _ = run(tmp_path, "construct", "construct.k=3")
    assert code == cli.EXIT_CONFIG


def test_construct_infeasible_exits_five(tmp_path):
    code, summary, _ = run(tmp_path, "construct", "construct.n=7", "construct.k=3", "construct.deltas=0.1")
    assert code == cli.EXIT_INFEASIBLE and summary["status"] == "infeasible"


def test_construct_outputs(tmp_path):
    code, summary, out = run(tmp_path, "construct", "construct.deltas=0.1,0.05,0.025")
    assert code == 0
    header, rows = read_csv(out / "quotients.csv")
    assert [float(r[0]) for r in rows] == [0.1, 0.05, 0.025]
    assert all(float(r[header.index("bubble_min_sigma")]) > 0 for r in rows)
    assert abs(float(rows[-1][header.index("quotient_excess")])) < 0.1
    assert (out / "neck.csv").exists() and (out / "bubble_0.025.csv").exists()


def test_verify_passes_with_summary(tmp_path):
    code, summary, _ = run(tmp_path, "verify", "verify.samples=20", "verify.symfun_samples=500",
                           "verify.grid_size=128", seed=5)
    assert code == 0
    assert summary["violations"] == "none"
    assert abs(float(summary["margin.quermass.k2.l1.round"])) < 1e-8
    assert abs(float(summary["margin.moser_trudinger.round"])) < 1e-8
