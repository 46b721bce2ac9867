import csv
import math

import pytest

from lancbio.bench import dump_config, parse_config, read_trace, summarize, trace_keys
from lancbio.cli import main
from lancbio.errors import ConfigParse, EmptyInput, UnknownProblem, UnknownSolver
from lancbio.solvers import TRACE_COLUMNS

MINIMAL = """
problem = "quadratic"
solver = "lancbio"
seeds = [0]
K = 10
"""


def write(path, text):
    path.write_text(text)
    return path


def trace_lines(path):
    return path.read_text().splitlines()


def drop_timing(lines):
    col = TRACE_COLUMNS.index("wall_time_s")
    out = []
    for line in lines:
        fields = line.split(",")
        out.append(fields[:col] + fields[col + 1:])
    return out


def test_run_minimal_config(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", MINIMAL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    path = tmp_path / "out" / "quadratic__lancbio__cell000__seed0.csv"
    assert str(path) in capsys.readouterr().out
    lines = trace_lines(path)
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 11
    assert (tmp_path / "out" / "cell000.toml").exists()


def test_repeated_runs_identical_modulo_timing(tmp_path):
    cfg = write(tmp_path / "c.toml", MINIMAL.replace('"lancbio"', '"subbio"'))
    for name in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / name)]) == 0
    a = trace_lines(tmp_path / "a" / "quadratic__subbio__cell000__seed0.csv")
    b = trace_lines(tmp_path / "b" / "quadratic__subbio__cell000__seed0.csv")
    assert drop_timing(a) == drop_timing(b)


def test_unknown_solver_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", MINIMAL.replace('"lancbio"', '"bfgs"'))
    assert main(["run", str(cfg)]) == 1
    assert "solver" in capsys.readouterr().err


def test_bad_field_names_key(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", MINIMAL + "K_max = 3\n")
    assert main(["run", str(cfg)]) == 1
    assert "K_max" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) == 1


def test_parse_errors():
    with pytest.raises(ConfigParse, match="seeds"):
        parse_config('problem = "quadratic"\nsolver = "soba"\n')
    with pytest.raises(ConfigParse, match="'m'"):
        parse_config(MINIMAL + 'm = "ten"\n')
    with pytest.raises(UnknownProblem, match="problem"):
        parse_config(MINIMAL.replace("quadratic", "cubic"))
    with pytest.raises(UnknownSolver, match="solver"):
        parse_config(MINIMAL.replace('"lancbio"', '"x"'))
    with pytest.raises(ConfigParse, match="TOML"):
        parse_config("problem = ")


def test_grid_expansion_and_round_trip():
    cells = parse_config(MINIMAL + "m = [5, 10]\ndy = [8, 12]\n")
    assert len(cells) == 4
    assert [(c.solver_config.m, c.problem_params["dy"]) for c in cells] == [
        (5, 8), (5, 12), (10, 8), (10, 12)
    ]
    for cell in cells:
        (again,) = parse_config(dump_config(cell))
        assert again.solver_config == cell.solver_config
        assert again.problem_params == cell.problem_params
        assert again.seeds == cell.seeds and again.problem == cell.problem


def fake_trace(path, final_hypergrad):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for k, g in enumerate((10.0, final_hypergrad), start=1):
            writer.writerow([k, 0.1, g, 1.0, 2.0, 3.0, "", k, k, k])
    return path


def test_summarize_single_and_pair(tmp_path):
    one = fake_trace(tmp_path / "quadratic__soba__cell000__seed0.csv", 1.0)
    (row,) = summarize([one])
    assert row["hypergrad_norm_mean"] == 1.0 and row["hypergrad_norm_std"] == 0.0
    assert row["test_metric_mean"] is None
    two = fake_trace(tmp_path / "quadratic__soba__cell000__seed1.csv", 3.0)
    (row,) = summarize([one, two])
    assert row["n_runs"] == 2
    assert row["hypergrad_norm_mean"] == 2.0
    assert row["hypergrad_norm_std"] == pytest.approx(math.sqrt(2.0))


def test_summarize_cli(tmp_path, capsys):
    fake_trace(tmp_path / "quadratic__soba__cell000__seed0.csv", 1.0)
    fake_trace(tmp_path / "quadratic__soba__cell000__seed1.csv", 3.0)
    out = tmp_path / "summary.csv"
    assert main(["summarize", str(tmp_path / "*.csv"), "--out", str(out)]) == 0
    assert "2.0000e+00 ± 1.41e+00" in capsys.readouterr().out
    assert out.read_text().startswith("problem,solver,cell,n_runs")


def test_summarize_empty(tmp_path):
    with pytest.raises(EmptyInput):
        summarize([])
    assert main(["summarize", str(tmp_path / "*.csv")]) == 1


def test_truncated_trace_still_parses(tmp_path):
    path = fake_trace(tmp_path / "t.csv", 1.0)
    text = path.read_text()
    path.write_text(text[:-7])  # cut the last row mid-way
    rows = read_trace(path)
    assert len(rows) == 1 and rows[0]["hypergrad_norm"] == 10.0


def test_trace_keys():
    keys = trace_keys("runs/nonconvex_sin__lancbio_minres__cell012__seed3.csv")
    assert keys == {"problem": "nonconvex_sin", "solver": "lancbio_minres", "cell": "012", "seed": "3"}


def test_check_oracles_cli(capsys):
    assert main(["check-oracles", "quadratic", "--points", "5"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5


def test_seed_override_and_jobs(tmp_path):
    cfg = write(tmp_path / "c.toml", MINIMAL.replace("[0]", "[0, 1, 2]"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
    assert len(list((tmp_path / "o").glob("*.csv"))) == 3
    assert main(["run", str(cfg), "--out", str(tmp_path / "p"), "--seed", "7"]) == 0
    assert [p.name for p in (tmp_path / "p").glob("*.csv")] == ["quadratic__lancbio__cell000__seed7.csv"]
