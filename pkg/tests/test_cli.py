import csv
import io

import numpy as np
import pytest

from cli_scenarios import COMMANDS, prepare_inputs, run, run_all
from salbench import io as sio
from salbench.cli import main
from salbench.core import FixationSet


@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory):
    out = []
    for tag in ("a", "b"):
        d = tmp_path_factory.mktemp(f"run_{tag}")
        prepare_inputs(d)
        out.append((d, run_all(d)))
    return out


@pytest.mark.parametrize("name", [c[0] for c in COMMANDS])
def test_command_succeeds_and_is_deterministic(twin_runs, name):
    (_, first), (_, second) = twin_runs
    code_a, files_a = first[name]
    code_b, files_b = second[name]
    assert code_a == code_b == 0
    expected = next(outputs for n, _, outputs in COMMANDS if n == name)
    assert sorted(files_a) == sorted(expected)
    for f in expected:
        assert files_a[f] == files_b[f], f


def test_output_contents(twin_runs):
    d, _ = twin_runs[0]
    rows = list(csv.reader(io.StringIO((d / "eval.csv").read_text())))
    assert rows[0] == ["stimulus_id", "metric", "score"]
    assert sum(r[0] == "mean" for r in rows) == 7
    assert len(rows) == 1 + 2 * 7 + 7
    png = sio.load_grid(d / "auc.png")
    assert png.shape == (16, 16) and png.min() == 0 and png.max() == 255
    assert abs(sio.load_density(d / "kde.sald").sum() - 1) < 1e-6
    assert sio.load_density(d / "kde.sald").shape == (10, 20)
    fit = sio.load_fit(d / "fit.txt")
    assert np.all(np.diff(fit.nonlinearity.knot_values) >= 0)
    matrix = list(csv.reader(io.StringIO((d / "matrix.csv").read_text())))
    assert matrix[0] == ["map_type", "metric", "mean", "stderr"] and len(matrix) == 1 + 35
    report = (d / "quartiles.txt").read_text().splitlines()
    assert report[0].startswith("thresholds,")
    assert sum(int(line.split(",")[1]) for line in report[2:]) == 150


def test_numbers_have_17_digits(twin_runs):
    d, _ = twin_runs[0]
    text = (d / "binning.csv").read_text().splitlines()[1]
    value = text.split(",")[-1]
    assert float(value) == float(f"{float(value):.17g}")
    assert len(value.replace("0.", "").lstrip("0")) >= 15


def test_format_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.sald").write_bytes(b"nope")
    assert main(["sample", "--density", str(tmp_path / "bad.sald"), "--n", "3", "--out", str(tmp_path / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_out_of_bounds_fixation_exit_code(tmp_path):
    prepare_inputs(tmp_path)
    (tmp_path / "fix.csv").write_text("stimulus_id,x,y\ns0,16,0\n")
    argv = "evaluate --map {d}/maps --fixations {d}/fix.csv --stimuli {d}/stim.csv --metric AUC"
    assert run(argv, tmp_path) == 2


def test_missing_file_exit_code(tmp_path):
    assert main(["apply-fit", "--fit", str(tmp_path / "none.txt"), "--map", "x", "--out", "y"]) == 2


def test_numeric_error_exit_code(tmp_path):
    sio.save_density(tmp_path / "u.sald", np.full((4, 4), 1 / 16))
    sio.save_fixations(tmp_path / "f.csv", [FixationSet.from_points([(0, 0), (1, 1)], "s0")])
    sio.save_stimuli(tmp_path / "s.csv", {"s0": (4, 4)})
    sio.save_grid(tmp_path / "flat.sald", np.ones((4, 4)))
    argv = "evaluate --map {d}/flat.sald --fixations {d}/f.csv --stimuli {d}/s.csv --metric NSS"
    assert run(argv, tmp_path) == 3


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["derive", "--metric", "XYZ", "--density", "a", "--out", "b"])
    assert info.value.code == 2
