import csv
import io
import json

import numpy as np
import pytest

from helmres import cli, geometry

CONFIG = """\
delta = 1.0
k = 1.663
theta = 1.1
nodes = 80
resonators = [
  [0.2, 0.1, -0.43, 0.01],
  [0.3, 0.3, -0.19, 0.01],
  [0.4, 0.25, 0.11, 0.01],
  [0.3, 0.2, 0.38, 0.01],
]
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cell.toml"
    p.write_text(CONFIG)
    return str(p)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_validate_exit_codes(config, capsys):
    assert cli.run(["validate", "--config", config]) == cli.EXIT_OK
    assert "PASS" in capsys.readouterr().out
    assert cli.run(["validate", "--config", config, "--k", "40"]) == cli.EXIT_INPUT
    assert "FAIL" in capsys.readouterr().out


def test_bad_config_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("delta = 1.0\nk = = 2\n")
    assert cli.run(["validate", "--config", str(p)]) == cli.EXIT_INPUT
    assert f"{p}:2:" in capsys.readouterr().err


def test_missing_config_file_is_input_error(tmp_path, capsys):
    assert cli.run(["validate", "--config", str(tmp_path / "none.toml")]) == cli.EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_greens_csv_matches_library(capsys):
    argv = ["greens", "--k", "1.663", "--theta", "0.5236", "--source", "0.1,0.6",
            "--grid=-0.3:0.3:3,0.2:1.0:2"]
    assert cli.run(argv) == cli.EXIT_OK
    table = rows(capsys.readouterr().out)
    assert table[0] == ["x1", "x2", "re", "im", "method"]
    assert len(table) == 7
    from helmres.qpgreen import QuasiPeriodicGreen
    w = geometry.WaveParams(1.663, 0.5236)
    g = QuasiPeriodicGreen(w.k, w.k1)
    x = np.array([float(table[4][0]), float(table[4][1])])
    ref = complex(g.value(np.array([0.1, 0.6]), x, method="ewald"))
    assert complex(float(table[4][2]), float(table[4][3])) == pytest.approx(ref, abs=1e-14)


def test_greens_output_is_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        argv = ["greens", "--k", "1.663", "--theta", "1.0", "--source", "0,0.5",
                "--grid=-0.4:0.4:4,0.1:0.9:3", "-o", str(path)]
        assert cli.run(argv) == cli.EXIT_OK
        outs.append(path.read_text())
        manifest = json.loads((tmp_path / (name + ".manifest.json")).read_text())
        assert manifest["command"] == "greens"
        assert "greens" in manifest["timing"]
    assert outs[0] == outs[1]


def test_greens_wood_anomaly_refused(capsys):
    # theta = 0 at k = pi puts the -1 diffraction order at grazing
    argv = ["greens", "--k", str(np.pi), "--theta", "0", "--source", "0,0.5", "--grid=0:0:1,1:1:1"]
    assert cli.run(argv) in (cli.EXIT_INPUT, cli.EXIT_NUMERIC)


def test_malformed_range_is_input_error(config, capsys):
    argv = ["sweep", "--config", config, "--k-range", "1.6:1.7", "--theta-range", "1:1:1"]
    assert cli.run(argv) == cli.EXIT_INPUT
    assert "a:b:n" in capsys.readouterr().err


def test_sweep_csv(config, tmp_path):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--config", config, "--k-range", "1.6:1.7:2", "--theta-range", "1.1:1.1:1",
            "--tolerance-profile", "fast", "-o", str(out)]
    assert cli.run(argv) == cli.EXIT_OK
    table = rows(out.read_text())
    assert table[0] == ["k", "theta", "abs_Is", "phase_Is", "sigma_min_Q"]
    assert [float(r[0]) for r in table[1:]] == [1.6, 1.7]
    assert all(0 < float(r[2]) < 1.5 for r in table[1:])
    manifest = json.loads((tmp_path / "sweep.csv.manifest.json").read_text())
    assert manifest["tolerances"]["nodes_per_cell"] == 40
    assert len(manifest["config_hash"]) == 64


def test_solve_json(config, capsys):
    assert cli.run(["solve", "--config", config, "--tolerance-profile", "fast"]) == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["k"] == 1.663
    assert "Is" in json.dumps(payload["solution"])
    assert payload["manifest"]["tolerances"]["profile"] == "fast"


def test_tune_writes_loadable_config(config, tmp_path):
    out = tmp_path / "tuned.toml"
    argv = ["tune", "--config", config, "--theta", "1.5707963267948966", "--nearest", "0.8858",
            "--nodes", "160", "-o", str(out)]
    assert cli.run(argv) == cli.EXIT_OK
    text = out.read_text()
    assert text.startswith("# helmres")
    tuned = geometry.parse_config(text)
    assert tuned.cell.n == 4
    assert all(0 < r.eps < 0.01 for r in tuned.cell.resonators)
    assert tuned.wave.theta == 1.1


def test_tune_requires_exactly_one_selector(config):
    with pytest.raises(SystemExit):
        cli.run(["tune", "--config", config, "--nearest", "0.9", "--eigenvalue", "0.9"])
