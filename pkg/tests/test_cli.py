import json

import numpy as np
import pytest

from kdbalance import cli_dispatch, estimate_ate, kdm1, read_csv, solve_weights


@pytest.fixture()
def csv_path(tmp_path):
    rng = np.random.default_rng(18)
    n = 40
    X = rng.standard_normal((n, 2))
    T = (rng.random(n) < 0.5).astype(int)
    T[:2] = 1
    T[2:4] = 0
    Y = X @ np.array([1.0, -0.5]) + T * 2.0 + rng.standard_normal(n)
    path = tmp_path / "d.csv"
    lines = ["x1,x2,T,Y"]
    lines += [
        f"{float(X[i, 0])!r},{float(X[i, 1])!r},{T[i]},{float(Y[i])!r}"
        for i in range(n)
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


# --- exit codes -----------------------------------------------------------------

def test_usage_errors_exit_1(tmp_path, csv_path):
    assert cli_dispatch([]) == 1
    assert cli_dispatch(["weights", "--csv", str(csv_path)]) == 1  # --out missing
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--out",
                         str(tmp_path / "w.csv"), "--scheme", "nonsense"]) == 1
    assert cli_dispatch(["simulate", "--design", "nonsense"]) == 1
    assert cli_dispatch(["no-such-command"]) == 1


def test_missing_file_exits_2(tmp_path):
    assert cli_dispatch(["weights", "--csv", str(tmp_path / "nope.csv"),
                         "--out", str(tmp_path / "w.csv")]) == 2


def test_malformed_csv_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,T,Y\n1.0,7,2.0\n1.5,0,2.5\n")
    assert cli_dispatch(["estimate", "--csv", str(bad)]) == 2


def test_infeasible_balance_exits_3(tmp_path):
    # treated values sit entirely outside the control hull, so exact
    # first-moment matching is impossible
    path = tmp_path / "sep.csv"
    path.write_text("x,T,Y\n5.0,1,1.0\n6.0,1,2.0\n0.0,0,3.0\n1.0,0,4.0\n")
    code = cli_dispatch(["weights", "--csv", str(path), "--scheme", "kdm1",
                         "--target", "att", "--out", str(tmp_path / "w.csv")])
    assert code == 3


def test_help_exits_0(capsys):
    assert cli_dispatch(["--help"]) == 0
    assert "weights" in capsys.readouterr().out


# --- weights / estimate round trip ------------------------------------------------

def test_weights_then_estimate_matches_library(tmp_path, csv_path, capsys):
    wpath = tmp_path / "w.csv"
    epath = tmp_path / "est.csv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "kdm1",
                         "--out", str(wpath)]) == 0
    out = capsys.readouterr().out
    assert "scheme: KDM1" in out
    assert "rw:" in out and "KD:" in out and "maxASMD:" in out
    assert cli_dispatch(["estimate", "--csv", str(csv_path), "--weights", str(wpath),
                         "--out", str(epath)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("ATE: ")

    data = read_csv(csv_path)
    expected = estimate_ate(data, solve_weights(data, kdm1()))
    lines = epath.read_text().splitlines()
    assert lines[0] == "estimand,estimate,scheme,lambda"
    cells = lines[1].split(",")
    assert cells[0] == "ATE" and cells[2] == "KDM1"
    assert float(cells[1]) == pytest.approx(expected, abs=1e-12)


def test_weights_trace_file(tmp_path, csv_path):
    wpath, tpath = tmp_path / "w.csv", tmp_path / "trace.tsv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "kdbc",
                         "--lambda", "1.0", "--out", str(wpath),
                         "--trace", str(tpath)]) == 0
    first = tpath.read_text().splitlines()[0]
    assert first == "iteration\tobjective\teq_residual\tbound_violation"


def test_trace_rejected_for_closed_form_schemes(tmp_path, csv_path):
    code = cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "ipw",
                         "--out", str(tmp_path / "w.csv"),
                         "--trace", str(tmp_path / "t.tsv")])
    assert code == 1


def test_estimate_rejects_foreign_weights(tmp_path, csv_path, capsys):
    wpath = tmp_path / "w.csv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "unad",
                         "--out", str(wpath)]) == 0
    # a dataset with a different group pattern
    other = tmp_path / "other.csv"
    rows = csv_path.read_text().splitlines()
    header, body = rows[0], rows[1:]
    flipped = []
    for line in body:
        cells = line.split(",")
        cells[2] = "0" if cells[2] == "1" else "1"
        flipped.append(",".join(cells))
    other.write_text("\n".join([header] + flipped) + "\n")
    capsys.readouterr()
    assert cli_dispatch(["estimate", "--csv", str(other), "--weights", str(wpath)]) == 2


def test_estimate_target_conflicts_with_scheme(tmp_path, csv_path):
    wpath = tmp_path / "w.csv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "kdm1",
                         "--out", str(wpath)]) == 0
    code = cli_dispatch(["estimate", "--csv", str(csv_path), "--weights", str(wpath),
                         "--target", "att"])
    assert code == 2


def test_estimate_unadjusted_serves_either_target(tmp_path, csv_path, capsys):
    wpath = tmp_path / "w.csv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "unad",
                         "--out", str(wpath)]) == 0
    capsys.readouterr()
    assert cli_dispatch(["estimate", "--csv", str(csv_path), "--weights", str(wpath),
                         "--target", "att"]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("ATT: ")


# --- simulate ---------------------------------------------------------------------

def _simulate_args(tmp_path, **extra):
    args = ["simulate", "--design", "kang-schafer", "--n", "60", "--reps", "3",
            "--seed", "1", "--methods", "oracle,unad"]
    for flag, value in extra.items():
        args += [flag, value]
    return args


def test_simulate_smoke(tmp_path, capsys):
    out_path = tmp_path / "table.csv"
    assert cli_dispatch(_simulate_args(tmp_path, **{"--out": str(out_path)})) == 0
    out = capsys.readouterr().out
    assert "UnAD" in out and "Oracle" in out
    lines = out_path.read_text().splitlines()
    assert lines[0].startswith("method,lambda,ATE,abs(Bias),sd,RMSE")
    assert len(lines) == 3  # header + one row per method


def test_simulate_jobs_do_not_change_output(capsys):
    base = ["simulate", "--design", "kang-schafer", "--n", "60", "--reps", "4",
            "--seed", "7", "--methods", "unad,ipw"]
    assert cli_dispatch(base + ["--jobs", "1"]) == 0
    serial = capsys.readouterr().out
    assert cli_dispatch(base + ["--jobs", "2"]) == 0
    parallel = capsys.readouterr().out
    assert serial == parallel


def test_simulate_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "design": "kang-schafer", "n": 60, "reps": 3, "seed": 2, "methods": "unad",
    }))
    assert cli_dispatch(["simulate", "--config", str(cfg)]) == 0
    from_config = capsys.readouterr().out
    assert cli_dispatch(["simulate", "--design", "kang-schafer", "--n", "60",
                         "--reps", "3", "--seed", "2", "--methods", "unad"]) == 0
    from_flags = capsys.readouterr().out
    assert from_config == from_flags  # config fills in exactly like flags
    assert cli_dispatch(["simulate", "--config", str(cfg), "--seed", "3"]) == 0
    overridden = capsys.readouterr().out
    assert overridden != from_config  # an explicit flag beats the config value


def test_simulate_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"design": "kang-schafer", "repz": 3}))
    assert cli_dispatch(["simulate", "--config", str(cfg)]) == 1


def test_simulate_config_must_be_json_object(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2, 3]")
    assert cli_dispatch(["simulate", "--config", str(cfg)]) == 1
    cfg.write_text("{not json")
    assert cli_dispatch(["simulate", "--config", str(cfg)]) == 1


def test_simulate_lambda_flags_conflict(tmp_path):
    args = _simulate_args(tmp_path)
    assert cli_dispatch(args + ["--lambda", "1.0", "--lambda-grid", "0,1"]) == 1


def test_simulate_sim2_sweeps_lambda_grid(tmp_path, capsys):
    out_path = tmp_path / "grid.csv"
    assert cli_dispatch(["simulate", "--design", "sim2", "--n", "60", "--reps", "3",
                         "--seed", "4", "--methods", "unad,kdbc",
                         "--lambda-grid", "0,2", "--out", str(out_path)]) == 0
    lines = out_path.read_text().splitlines()
    assert "X5ASMD" in lines[0] and "X6ASMD" in lines[0]
    assert len(lines) == 5  # header + 2 methods x 2 penalties
    lambdas = {line.split(",")[1] for line in lines[1:]}
    assert lambdas == {"0.0", "2.0"}


# --- bootstrap ----------------------------------------------------------------------

def test_bootstrap_smoke(tmp_path, csv_path, capsys):
    out_path = tmp_path / "boot.csv"
    assert cli_dispatch(["bootstrap", "--csv", str(csv_path), "--methods", "unad",
                         "--b", "8", "--seed", "0", "--out", str(out_path)]) == 0
    assert "UnAD" in capsys.readouterr().out
    lines = out_path.read_text().splitlines()
    assert lines[0] == "method,lambda,ATE,sd,failures"
    assert len(lines) == 2


# --- diagnose ------------------------------------------------------------------------

def test_diagnose_writes_series_files(tmp_path, csv_path, capsys):
    prefix = str(tmp_path / "diag")
    assert cli_dispatch(["diagnose", "--csv", str(csv_path), "--scheme", "kdm1",
                         "--grid-points", "64", "--out-prefix", prefix]) == 0
    out = capsys.readouterr().out
    assert "rw:" in out and "KD:" in out
    for name in ("x1", "x2"):
        ecdf = tmp_path / f"diag_ecdf_{name}.csv"
        dens = tmp_path / f"diag_density_{name}.csv"
        assert ecdf.exists() and dens.exists()
        assert ecdf.read_text().splitlines()[0] == "value,treated_cdf,control_cdf"
        dens_lines = dens.read_text().splitlines()
        assert dens_lines[0] == "grid,treated_density,control_density"
        assert len(dens_lines) == 65


def test_diagnose_covariate_subset(tmp_path, csv_path):
    prefix = str(tmp_path / "sub")
    assert cli_dispatch(["diagnose", "--csv", str(csv_path), "--covariates", "x2",
                         "--out-prefix", prefix]) == 0
    assert (tmp_path / "sub_ecdf_x2.csv").exists()
    assert not (tmp_path / "sub_ecdf_x1.csv").exists()
    assert cli_dispatch(["diagnose", "--csv", str(csv_path),
                         "--covariates", "zzz", "--out-prefix", prefix]) == 1


def test_diagnose_accepts_saved_weights(tmp_path, csv_path, capsys):
    wpath = tmp_path / "w.csv"
    assert cli_dispatch(["weights", "--csv", str(csv_path), "--scheme", "kdbc",
                         "--out", str(wpath)]) == 0
    capsys.readouterr()
    prefix = str(tmp_path / "reuse")
    assert cli_dispatch(["diagnose", "--csv", str(csv_path), "--weights", str(wpath),
                         "--out-prefix", prefix]) == 0
    assert "scheme: KDBC" in capsys.readouterr().out
