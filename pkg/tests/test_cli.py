"""Command-line surface: exit codes, output files, determinism basics."""

import json

import numpy as np
import pytest

from densfar.cli import main
from densfar.grid import make_grid
from densfar.io import save_grid_function
from densfar.simulate import acceptance_sample, make_cosine_generator, simulate_far

from conftest import triangular_density


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    # synthetic persistent panel written in the observation CSV schema
    out = tmp_path_factory.mktemp("data") / "panel.csv"
    grid = make_grid(0.0, 1.0, 64)
    gen = make_cosine_generator(
        grid, strengths=(0.85, 0.7), noise_sds=(0.05, 0.04)
    )
    panel = simulate_far(gen, 44, seed=100, burn_in=60)
    lines = ["period,value"]
    for t, (label, f) in enumerate(zip(panel.labels, panel.densities)):
        for x in acceptance_sample(f, 220, seed=(100, t)):
            lines.append(f"{label},{float(x)!r}")
    out.write_text("\n".join(lines) + "\n")
    return out


def test_unknown_flag_exits_one(capsys):
    code = main(["estimate", "--frobnicate"])
    assert code == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_subcommand_exits_one(capsys):
    assert main([]) == 1


def test_estimate_smoke(tmp_path, panel_csv):
    model_path = tmp_path / "model.bin"
    code = main(
        [
            "estimate",
            "--input", str(panel_csv),
            "--grid-n", "64",
            "--K", "2",
            "--out", str(model_path),
        ]
    )
    assert code == 0
    assert model_path.exists()
    scree = model_path.parent / (model_path.name + ".scree.csv")
    assert scree.exists()
    lines = scree.read_text().splitlines()
    assert lines[0] == "k,eigenvalue"
    assert len(lines) >= 3


def test_estimate_missing_input_exits_one(tmp_path, capsys):
    out = tmp_path / "m.bin"
    code = main(
        ["estimate", "--input", str(tmp_path / "none.csv"), "--K", "1",
         "--out", str(out)]
    )
    assert code == 1
    assert not out.exists()  # validation failure leaves no partial output


def test_estimate_and_sample_byte_identical(tmp_path, panel_csv):
    def run_estimate(out):
        assert main(
            ["estimate", "--input", str(panel_csv), "--grid-n", "48",
             "--K", "2", "--out", str(out)]
        ) == 0

    run_estimate(tmp_path / "m1.bin")
    run_estimate(tmp_path / "m2.bin")
    assert (tmp_path / "m1.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()
    s1 = (tmp_path / "m1.bin.scree.csv").read_bytes()
    s2 = (tmp_path / "m2.bin.scree.csv").read_bytes()
    assert s1 == s2

    grid = make_grid(0.0, 1.0, 64)
    density_path = tmp_path / "d.json"
    save_grid_function(triangular_density(grid), density_path)
    for name in ("draws1.csv", "draws2.csv"):
        assert main(
            ["sample", "--density", str(density_path), "--n", "200",
             "--seed", "4", "--out", str(tmp_path / name)]
        ) == 0
    assert (tmp_path / "draws1.csv").read_bytes() == (tmp_path / "draws2.csv").read_bytes()


def test_forecast_and_analyze(tmp_path, panel_csv):
    model_path = tmp_path / "model.json"
    assert main(
        ["estimate", "--input", str(panel_csv), "--grid-n", "64",
         "--K", "2", "--out", str(model_path), "--format", "json"]
    ) == 0

    fc_dir = tmp_path / "fc"
    code = main(
        ["forecast", "--model", str(model_path), "--input", str(panel_csv),
         "--horizon", "2", "--out-dir", str(fc_dir)]
    )
    assert code == 0
    assert (fc_dir / "forecast.csv").exists()
    assert (fc_dir / "intervals.csv").exists()
    meta = json.loads((fc_dir / "forecast_meta.json").read_text())
    assert meta["horizon"] == 2

    an_dir = tmp_path / "features"
    assert main(
        ["analyze", "features", "--model", str(model_path),
         "--out-dir", str(an_dir), "-m", "2"]
    ) == 0
    assert (an_dir / "features.csv").exists()
    meta = json.loads((an_dir / "analyze_meta.json").read_text())
    assert len(meta["strengths"]) == 2

    irf_dir = tmp_path / "irf"
    assert main(
        ["analyze", "irf", "--model", str(model_path), "--out-dir", str(irf_dir),
         "--functional", "moment:1", "left:0.05"]
    ) == 0
    assert (irf_dir / "irf_moment_1.csv").exists()
    assert (irf_dir / "irf_left_tail_0.05.csv").exists()

    vd_dir = tmp_path / "vd"
    assert main(
        ["analyze", "vardecomp", "--model", str(model_path), "--out-dir", str(vd_dir),
         "--kmax", "2", "--functional", "moment:2"]
    ) == 0
    body = (vd_dir / "vardecomp_moment_2.csv").read_text().splitlines()
    assert body[0] == "k,point"
    meta = json.loads((vd_dir / "analyze_meta.json").read_text())
    assert "moment_2" in meta["r_squared"]

    tails_dir = tmp_path / "tails"
    assert main(
        ["analyze", "tails", "--model", str(model_path), "--out-dir", str(tails_dir),
         "--kmax", "2"]
    ) == 0
    for name in (
        "tails_left_irf.csv",
        "tails_right_irf.csv",
        "tails_left_vardecomp.csv",
        "tails_right_vardecomp.csv",
    ):
        assert (tails_dir / name).exists()


def test_analyze_with_bootstrap_band(tmp_path, panel_csv):
    model_path = tmp_path / "model.bin"
    assert main(
        ["estimate", "--input", str(panel_csv), "--grid-n", "48",
         "--K", "2", "--out", str(model_path)]
    ) == 0
    out_dir = tmp_path / "irf_band"
    assert main(
        ["analyze", "irf", "--model", str(model_path), "--out-dir", str(out_dir),
         "--functional", "moment:1", "--bootstrap", "100", "--seed", "3"]
    ) == 0
    header = (out_dir / "irf_moment_1.csv").read_text().splitlines()[0]
    assert header == "x,point,lower,upper"


def test_backtest_report(tmp_path, panel_csv):
    report = tmp_path / "report.csv"
    code = main(
        ["backtest", "--input", str(panel_csv), "--grid-n", "48",
         "--n-test", "6", "--K-candidates", "1,2", "--out", str(report)]
    )
    assert code == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "predictor,measure,mean,median"
    assert len(lines) == 1 + 3 * 6
    predictors = {line.split(",")[0] for line in lines[1:]}
    assert predictors == {"FAR", "AVE", "LAST"}
    meta = json.loads((report.parent / "report.csv.meta.json").read_text())
    assert len(meta["selected_K"]) == 6


def test_simulate_synthetic_config(tmp_path):
    config = {
        "seed": 5,
        "iterations": 2,
        "T_values": [20],
        "N_values": [80],
        "burn_in": 30,
        "K": 2,
        "kernel": "normal",
        "generator": {
            "synthetic": {
                "support": [0.0, 1.0],
                "grid_n": 48,
                "strengths": [0.8, 0.6],
                "noise_sds": [0.05, 0.04],
            }
        },
    }
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "study.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("T,measure,N80_FAR_mean,N80_FAR_median")
    assert len(lines) == 1 + 6


def test_simulate_model_generator(tmp_path, panel_csv):
    model_path = tmp_path / "gen_model.bin"
    assert main(
        ["estimate", "--input", str(panel_csv), "--grid-n", "48",
         "--K", "2", "--out", str(model_path)]
    ) == 0
    config = {
        "seed": 6,
        "iterations": 1,
        "T_values": [15],
        "N_values": [60],
        "burn_in": 20,
        "K": 2,
        "generator": {"model": str(model_path)},
    }
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "study.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0


def test_simulate_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 1
    cfg.write_text(json.dumps({"seed": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 1


def test_sample_command(tmp_path):
    grid = make_grid(0.0, 1.0, 128)
    density_path = tmp_path / "density.json"
    save_grid_function(triangular_density(grid), density_path)
    out = tmp_path / "draws.csv"
    assert main(
        ["sample", "--density", str(density_path), "--n", "500",
         "--seed", "9", "--out", str(out)]
    ) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "value"
    draws = np.array([float(v) for v in lines[1:]])
    assert draws.size == 500
    assert draws.min() >= 0.0 and draws.max() <= 1.0


def test_runtime_error_exits_two(tmp_path, capsys):
    # valid inputs but an infeasible pipeline: K far beyond usable rank
    grid = make_grid(0.0, 1.0, 64)
    gen = make_cosine_generator(grid, strengths=(0.5,), noise_sds=(0.05,))
    panel = simulate_far(gen, 9, seed=11, burn_in=20)
    lines = ["period,value"]
    for t, (label, f) in enumerate(zip(panel.labels, panel.densities)):
        for x in acceptance_sample(f, 60, seed=(11, t)):
            lines.append(f"{label},{float(x)!r}")
    csv_path = tmp_path / "tiny.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    code = main(
        ["estimate", "--input", str(csv_path), "--grid-n", "32",
         "--K", "30", "--out", str(tmp_path / "m.bin")]
    )
    assert code == 2
    assert "runtime error" in capsys.readouterr().err
