import csv
import json

import pytest

from aoc_plots.cli import main


def write_curve(tmp_path):
    path = tmp_path / "learning_curve.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["episode", "n_seeds", "length_mean", "length_std", "return_mean", "return_std"]
        )
        for e in range(20):
            w.writerow([e + 1, 3, 50.0 - e, 2.0, e - 50.0, 2.0])
    return path


def test_flags_mode(tmp_path, capsys):
    curve = write_curve(tmp_path)
    out = tmp_path / "fig.png"
    rc = main(["--kind", "curve", "--input", str(curve), "--out", str(out)])
    assert rc == 0
    assert capsys.readouterr().out.strip() == str(out)
    assert out.exists()


def test_spec_file_mode(tmp_path):
    curve = write_curve(tmp_path)
    out = tmp_path / "fig.png"
    spec = tmp_path / "fig.json"
    spec.write_text(json.dumps(
        {"kind": "curve", "input": str(curve), "out": str(out), "metric": "return"}
    ))
    assert main([str(spec)]) == 0
    assert out.exists()


def test_plot_errors_exit_2(tmp_path, capsys):
    rc = main(["--kind", "curve", "--input", str(tmp_path / "gone.csv"),
               "--out", str(tmp_path / "x.png")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_incomplete_flags_are_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--kind", "curve"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["--kind", "pie", "--input", "a", "--out", "b"])
