import json

import numpy as np
import pandas as pd
import pytest

from qgtools.cli import RunConfig, main, parse_config


def test_spectrum(tmp_path, star3_json):
    args = ["spectrum", str(star3_json), "--num-eigs", "4", "--mesh-h", "0.01"]
    assert main(args + ["--out-dir", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "star3_spectrum.csv")
    assert list(table.columns) == ["index", "eigenvalue", "est_multiplicity"]
    assert len(table) == 4
    assert table["eigenvalue"].iloc[1] == pytest.approx(np.pi**2 / 4, rel=1e-3)
    assert table["est_multiplicity"].iloc[1] == 2


def test_malformed_graph(tmp_path, capsys):
    fpath = tmp_path / "bad.json"
    d = {
        "vertices": [{"id": 0}, {"id": 1}],
        "edges": [{"id": 0, "tail": 0, "head": 1}],
    }
    fpath.write_text(json.dumps(d))
    assert main(["spectrum", str(fpath), "--out-dir", str(tmp_path)]) == 1
    assert "edges[0].length" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["spectrum", str(tmp_path / "none.json")]) == 1


def test_sierpinski_generation_limit(tmp_path, capsys):
    assert main(["sierpinski", "--generations", "9", "--out-dir", str(tmp_path)]) == 1
    assert "--generations" in capsys.readouterr().err


def test_sierpinski(tmp_path):
    args = ["sierpinski", "--generations", "2", "--levels", "0"]
    assert main(args + ["--out-dir", str(tmp_path)]) == 0
    levels = pd.read_csv(tmp_path / "sierpinski_levels_0.csv")
    assert levels["value"].tolist() == [0.75, 1.5]
    spectrum = pd.read_csv(tmp_path / "sierpinski_g2_spectrum.csv")
    assert len(spectrum) == 6
    assert "in_levels" in spectrum.columns
    assert (tmp_path / "sierpinski_g2_metric_gaps.csv").exists()


def test_closeness_random_no_trials(tmp_path):
    args = ["closeness-random", "--trials", "0", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "closeness_random_seed0.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        args = ["closeness-random", "--trials", "3", "--seed", "5"]
        assert main(args + ["--out-dir", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "closeness_random_seed5.csv").read_bytes()
    assert first == (tmp_path / "b" / "closeness_random_seed5.csv").read_bytes()


def test_sweep_single_eps(tmp_path, star3_json):
    args = ["sweep", str(star3_json), "--eps", "0.3", "--num-eigs", "4"]
    assert main(args + ["--out-dir", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "star3_sweep.csv")
    assert len(table) == 1
    assert table["resolvent_defect"].iloc[0] <= table["bound_4delta"].iloc[0] + 1e-9
    assert table["verified"].iloc[0] in (0.0, 1.0)


def test_sweep_rejects_increasing_eps(star3_json, capsys):
    assert main(["sweep", str(star3_json), "--eps", "0.1,0.2"]) == 1
    assert "strictly decreasing" in capsys.readouterr().err


def test_parse_config_defaults():
    config = parse_config(["closeness-random"])
    assert config == RunConfig(command="closeness-random")


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["mesh"])


def test_seed_only_on_sampling_commands(star3_json):
    config = parse_config(["sweep", str(star3_json), "--eps", "0.3", "--seed", "4"])
    assert config.seed == 4
    assert parse_config(["closeness-random", "--seed", "9"]).seed == 9
    with pytest.raises(SystemExit):
        parse_config(["spectrum", str(star3_json), "--seed", "4"])
