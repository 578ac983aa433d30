import csv
import io
from pathlib import Path

import numpy as np
import pytest

from gausslt import lemmas
from gausslt.cli import main
from gausslt.config import (ConfigError, ExperimentConfig, build_operator, load_kernel_csv, parse_config_text)
from gausslt.gram import VerifyReport
from gausslt.harness import emit_plotdata, run, write_output
from gausslt.hilbert import builtin_operator, make_grid
from gausslt.localtime import second_moment_exact


def cfg(**kw):
    return ExperimentConfig.from_mapping({k: str(v) for k, v in kw.items()})


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_parse_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_mapping({"command": "verify", "sed": "1"})
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="expected"):
        parse_config_text("seed 1\n")
    with pytest.raises(ConfigError, match="bad value"):
        cfg(command="verify", seed="x")
    with pytest.raises(ConfigError, match="command"):
        ExperimentConfig.from_mapping({"seed": "1"})


def test_comments_and_round_trip():
    c = ExperimentConfig.from_text("# header\ncommand = selfx-planar  # trailing\na = 10,100\nalpha = 2\nreps = 0\n")
    assert c.a == (10.0, 100.0) and c.alpha == (2.0,)
    assert ExperimentConfig.from_text(c.to_text()) == c


def test_hash_ignores_threads_and_output_only():
    a = cfg(command="verify", seed=1)
    assert a.sha256 == cfg(command="verify", seed=1, threads=8, output="x.csv").sha256
    assert a.sha256 != cfg(command="verify", seed=2).sha256


def test_preset_fills_only_unset():
    c = cfg(command="lt-moments", preset="desk", grid=64).with_preset()
    assert c.grid == 64 and c.reps == 2000 and c.eps == 1e-3
    with pytest.raises(ConfigError):
        cfg(command="verify", preset="huge").with_preset()


def test_missing_physics_parameter_is_an_error():
    with pytest.raises(ConfigError, match="eps"):
        run(cfg(command="lt-moments", grid=16, reps=0))
    with pytest.raises(ConfigError, match="reps"):
        run(cfg(command="selfx-1d", a=1.0))


def test_validation():
    for bad in ({"eps": -1}, {"grid": 1}, {"dim": 3}, {"threads": 0}, {"reps": -2}):
        with pytest.raises(ConfigError):
            cfg(command="simulate", **bad).validate()
    with pytest.raises(ConfigError):
        cfg(command="bogus").validate()


def test_empty_region_is_config_error():
    with pytest.raises(ConfigError):
        run(cfg(command="selfx-planar", a=1.0, alpha=1.0, reps=0))


def test_kernel_file(tmp_path):
    p = tmp_path / "k.csv"
    p.write_text("i,j,value\n# comment\n1,0,2.5\n3,1,-1\n")
    g = make_grid(4)
    T = load_kernel_csv(p, g)
    assert T[1, 0] == 2.5 and T[3, 1] == -1 and T.sum() == 1.5
    A = build_operator(cfg(command="lt-moments", operator="volterra", kernel_file=p, grid=4))
    assert A.matrix[1, 0] == pytest.approx(2.5 * g.h)
    with pytest.raises(ConfigError, match="outside"):
        load_kernel_csv(p, make_grid(2))
    p.write_text("0,zero,1\n")
    with pytest.raises(ConfigError, match="malformed"):
        load_kernel_csv(p, g)
    with pytest.raises(ConfigError, match="cannot read"):
        load_kernel_csv(tmp_path / "missing.csv", g)


def test_operator_builders():
    g = make_grid(8)
    for op in ("identity", "scaled", "multiplication", "volterra", "perturbation", "complement_projection"):
        assert build_operator(cfg(command="lt-moments", operator=op, grid=8), g).grid == g
    with pytest.raises(ConfigError):
        build_operator(cfg(command="lt-moments", operator="nope", grid=8))


def test_simulate_csv_layout():
    out = run(cfg(command="simulate", grid=8, reps=2, seed=1, dim=2))
    rows = list(csv.reader(body(out.csv_text())))
    assert rows[0] == ["replicate", "t", "x1", "x2"]
    assert len(rows) == 1 + 2 * 9
    assert out.csv_text().startswith("# gausslt ")
    assert f"config_sha256={out.config.sha256}" in out.csv_text().splitlines()[0]
    bridge = run(cfg(command="simulate", grid=8, reps=1, seed=1, a=1.5))
    assert float(list(csv.reader(body(bridge.csv_text())))[-1][2]) == 1.5


def test_lt_moments_exact_only_matches_library():
    out = run(cfg(command="lt-moments", grid=64, eps=1e-3, reps=0, operator="scaled", scale=2))
    row = out.rows[0]
    A = 2.0 * builtin_operator("identity", make_grid(64))
    assert row[4] == second_moment_exact(A, 2).value
    assert row[6] is None


def test_selfx_planar_classification_column():
    out = run(cfg(command="selfx-planar", a="10,100,1000", alpha="1.5,2,3", reps=0))
    verdicts = {r[1]: r[5] for r in out.rows}
    assert verdicts[1.5].startswith("zero") and verdicts[2.0].startswith("finite")
    assert verdicts[3.0].startswith("divergent")
    narrow = run(cfg(command="selfx-planar", a="10,20", alpha="2", reps=0))
    assert narrow.rows[0][5] == "n/a"


def test_thread_count_does_not_change_bytes():
    base = dict(command="lt-converge", grid=64, moment_grid=32, eps=2e-3, reps=30, seed=5, ns="1,2,4")
    a = run(cfg(**base, threads=1)).csv_text()
    b = run(cfg(**base, threads=3)).csv_text()
    assert a == b


def test_write_output_file(tmp_path):
    target = tmp_path / "o.csv"
    out = run(cfg(command="selfx-1d", a="0,1", reps=0, output=target))
    text = write_output(out)
    assert target.read_text() == text and not (tmp_path / "o.csv.tmp").exists()


def test_plotdata_series(tmp_path):
    src = tmp_path / "res.csv"
    out = run(cfg(command="selfx-planar", a="10,100", alpha="1.5,2", reps=0))
    src.write_text(out.csv_text())
    files = emit_plotdata(src, tmp_path / "plots")
    names = sorted(Path(f).name for f in files)
    assert names == ["res__exact__alpha=1.5.dat", "res__exact__alpha=2.0.dat"]
    xy = np.loadtxt(tmp_path / "plots" / "res__exact__alpha=2.0.dat")
    np.testing.assert_allclose(xy[:, 0], np.log([10, 100]))


def test_plotdata_error_column_and_empty(tmp_path):
    src = tmp_path / "conv.csv"
    src.write_text("# gausslt\nn,exact_value,mc_mean,mc_se,refinement_error\n1,0.5,0.4,0.01,1e-6\n2,0.3,,,2e-6\n")
    emit_plotdata(src, tmp_path)
    ev = np.loadtxt(tmp_path / "conv__exact_value.dat")
    assert ev.shape == (2, 3) and ev[1, 2] == 2e-6
    mc = np.atleast_2d(np.loadtxt(tmp_path / "conv__mc_mean.dat"))
    assert mc.shape == (1, 3)
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing\n")
    assert emit_plotdata(empty, tmp_path / "e") == []


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    assert main(["selfx-1d", "--a", "0,2", "--reps", "0"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "a,p,exact,mc_mean,mc_se,mc_expected"
    assert main(["lt-moments", "--grid", "16", "--reps", "0"]) == 2
    assert "eps" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("command = verify\ncolour = red\n")
    assert main(["verify", "--config", str(bad)]) == 2
    assert main(["verify", "--config", str(tmp_path / "absent.cfg")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--bogus"])
    assert exc.value.code == 2

    def failing(rng):
        return VerifyReport.from_margin("bad", -1.0, 0.0, {"x": 1})

    monkeypatch.setattr(lemmas, "SUITES", {"bad": (failing, 2, 9)})
    assert main(["verify", "--seed", "1"]) == 1
    err = capsys.readouterr().err
    assert "witness" in err and '"x"' in err


def test_cli_config_file_and_flag_override(tmp_path, capsys):
    c = tmp_path / "run.cfg"
    c.write_text("command = selfx-1d\na = 1\nreps = 0\n")
    assert main(["selfx-1d", "--config", str(c), "--a", "0"]) == 0
    rows = list(csv.reader(body(capsys.readouterr().out)))
    assert rows[1][0] == "0.0"
    assert main(["verify", "--config", str(c)]) == 2
