import csv
import json

import numpy as np
import pytest
import scipy.sparse as sp

from mhdtrace.cli import main, run
from mhdtrace.config import ConfigError, RunConfig, config_keys, parse_config
from mhdtrace.sparse import write_matrix_market

from oracles import random_saddle


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- configuration

def test_empty_config_defaults():
    cfg = parse_config(text="", problem="mms")
    assert cfg.problem == "mms"
    assert (cfg.eps_a, cfg.eps_r, cfg.max_picard) == (1e-6, 1e-4, 20)
    assert cfg.tol == 1e-6 and cfg.tol_is_relative
    assert cfg.pre_steps == 3 and cfg.post_steps == 3
    assert cfg.maxit is None
    assert cfg.precond == "bfbt-amg-gmres" and cfg.smoother == "gmres-ilu0"


def test_flexible_outer_solver_selection():
    assert parse_config(overrides=["--precond", "bfbt-amg-gmres"]).flexible
    cfg = parse_config(overrides=["--precond", "bfbt-amg-ilu0"])
    assert not cfg.flexible and cfg.smoother == "ilu0"
    assert parse_config(overrides=["--precond", "dd-ilu0", "--outer", "fgmres"]).flexible


def test_hmkh_absolute_tolerance_unless_overridden():
    cfg = parse_config(text="[run]\nproblem = hmkh\n")
    assert cfg.tol == 1e-9 and not cfg.tol_is_relative
    cfg = parse_config(text="[run]\nproblem = hmkh\n[solver]\ntol = 1e-7\n")
    assert cfg.tol == 1e-7 and not cfg.tol_is_relative
    cfg = parse_config(overrides=["--problem", "hmkh", "--tol_mode", "relative"])
    assert cfg.tol == 1e-9 and cfg.tol_is_relative


def test_unknown_key_reports_line():
    text = "# header\n[mesh]\nnx = 4\nnz = 3\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text=text)
    assert err.value.line == 4
    assert "nz" in str(err.value) and ":4:" in str(err.value)


def test_type_error_reports_line(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[solver]\nprecond = dd-ilu0\n\n[time]\ndt = fast\n")
    with pytest.raises(ConfigError) as err:
        parse_config(str(p))
    assert err.value.line == 5
    assert str(err.value).startswith(f"{p}:5:")


def test_unknown_section_and_bad_choice():
    with pytest.raises(ConfigError, match="section"):
        parse_config(text="[solvers]\ntol = 1\n")
    with pytest.raises(ConfigError, match="not one of"):
        parse_config(text="[solver]\nprecond = jacobi\n")
    with pytest.raises(ConfigError, match="positive"):
        parse_config(overrides=["--nx", "0"])
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(overrides=["--bogus", "1"])


def test_overrides_beat_file_and_accept_forms():
    cfg = parse_config(text="[mesh]\nnx = 4\nmeshes = 4, 8\n",
                       overrides=["--nx", "6", "--mesh.ny=5", "--lundquist", "1e3,1e5"])
    assert (cfg.nx, cfg.ny) == (6, 5)
    assert cfg.meshes == [4, 8] and cfg.lundquist == [1e3, 1e5]
    assert {"nx", "ny", "meshes", "lundquist"} <= cfg.explicit


def test_every_schema_key_is_a_config_field():
    fields = set(RunConfig().as_dict())
    assert all(k in fields for _, k in config_keys())


# ---------------------------------------------------------------- subcommands

def test_mms_subcommand_writes_rates(tmp_path):
    out = tmp_path / "mms"
    code = main(["mms", "--degrees", "1", "--meshes", "4,8", "--precond", "direct", "--output_dir", str(out)])
    assert code == 0
    rows = read_csv(out / "mms_convergence.csv")
    assert [r["n"] for r in rows] == ["4", "8"]
    assert rows[0]["rate_u"] == "nan"
    assert 1.4 < float(rows[1]["rate_u"]) < 2.4
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["artifacts"] == ["mms_convergence.csv"]


def test_manifest_schema(tmp_path):
    out = tmp_path / "m"
    main(["mms", "--degrees", "1", "--meshes", "2", "--precond", "direct", "--output_dir", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    assert set(man) == {"subcommand", "config", "versions", "artifacts", "status", "messages"}
    assert set(man["versions"]) == {"mhdtrace", "python", "numpy", "scipy"}
    assert man["config"]["degrees"] == [1] and man["subcommand"] == "mms"
    assert "explicit" not in man["config"]


def test_solve_transient_island(tmp_path):
    out = tmp_path / "s"
    code = main(["solve", "--problem", "island", "--nx", "4", "--ny", "4", "--p", "1", "--steps", "2",
                 "--dt", "0.1", "--vtk_every", "1", "--output_dir", str(out)])
    assert code == 0
    rows = read_csv(out / "steps.csv")
    assert len(rows) == 2 and "wall_time" in rows[0]
    assert (out / "fields_00001.vtk").exists() and (out / "fields_00002.vtk").exists()


def test_solve_steady_mms(tmp_path):
    out = tmp_path / "st"
    assert main(["solve", "--steady", "true", "--nx", "4", "--ny", "4", "--p", "1",
                 "--precond", "bfbt-amg-ilu0", "--output_dir", str(out)]) == 0
    rows = read_csv(out / "picard.csv")
    assert 1 <= len(rows) <= 10
    assert float(rows[-1]["metric"]) < 1
    assert (out / "solution.vtk").exists()


def test_compare_table(tmp_path):
    out = tmp_path / "c"
    code = main(["compare", "--problem", "island", "--nx", "4", "--ny", "4", "--p", "1", "--steps", "1",
                 "--dt", "0.1", "--output_dir", str(out)])
    assert code == 0
    rows = read_csv(out / "compare.csv")
    assert [r["precond"] for r in rows] == ["dd-ilu0", "bfbt-amg-ilu0", "bfbt-amg-gmres"]
    assert all(not r["avg_linear_iters"].endswith("*") for r in rows)


def test_robustness_requires_island(tmp_path):
    assert main(["robustness", "--problem", "mms", "--output_dir", str(tmp_path)]) == 2


def _write_saddle(tmp_path, n_u=12, n_p=3):
    rng = np.random.default_rng(0)
    F, B = random_saddle(rng, n_u, n_p)
    K = np.block([[F, -B.T], [B, np.zeros((n_p, n_p))]])
    path = tmp_path / "K.mtx"
    write_matrix_market(path, sp.csr_matrix(K))
    return path, K


@pytest.mark.parametrize("precond", ["direct", "dd-ilu0", "ideal", "bfbt-amg-ilu0"])
def test_generic_matrix_market(tmp_path, precond):
    path, K = _write_saddle(tmp_path)
    out = tmp_path / precond
    code = main(["generic", "--matrix", str(path), "--n_u", "12", "--precond", precond,
                 "--tol", "1e-10", "--output_dir", str(out)])
    assert code == 0
    x = np.loadtxt(out / "solution.txt")
    assert np.allclose(x, 1.0, atol=1e-7)
    if precond != "direct":
        hist = read_csv(out / "history.csv")
        assert hist[0]["solve_id"] == "generic"


def test_generic_rhs_file(tmp_path):
    path, K = _write_saddle(tmp_path)
    b = np.arange(15.0)
    np.savetxt(tmp_path / "b.txt", b)
    out = tmp_path / "o"
    assert main(["generic", "--matrix", str(path), "--rhs", str(tmp_path / "b.txt"), "--precond", "direct",
                 "--output_dir", str(out)]) == 0
    assert np.allclose(np.loadtxt(out / "solution.txt"), np.linalg.solve(K, b), atol=1e-10)


def test_generic_maxit_marks_star(tmp_path, capsys):
    path, _ = _write_saddle(tmp_path, 40, 10)
    out = tmp_path / "o"
    code = main(["generic", "--matrix", str(path), "--precond", "dd-ilu0", "--dd_steps", "1",
                 "--maxit", "1", "--tol", "1e-14", "--output_dir", str(out)])
    assert code == 1
    assert "*" in capsys.readouterr().out
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed" and any("maxit" in m for m in man["messages"])


def test_generic_missing_file(tmp_path):
    assert main(["generic", "--matrix", str(tmp_path / "none.mtx"), "--output_dir", str(tmp_path)]) == 2


def test_reproducible_csv_without_timings(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        cfg = parse_config(overrides=["--problem", "island", "--nx", "4", "--ny", "4", "--p", "1",
                                      "--steps", "2", "--dt", "0.1", "--timings", "false",
                                      "--output_dir", str(out)])
        assert run("compare", cfg) == 0
        assert run("solve", cfg) == 0
        outs.append(out)
    for name in ("compare.csv", "steps.csv"):
        a = (outs[0] / name).read_bytes()
        assert a == (outs[1] / name).read_bytes()
        assert b"time" not in a
