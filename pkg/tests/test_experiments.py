import json
import math

import numpy as np
import pytest

from simcap import experiments as ex
from simcap import metrics
from simcap.cli import main
from simcap.config import SystemConfig

SMALL = SystemConfig(n_t=2, n_r=2, m_tx=8, n_rx=10, layers_tx=2, layers_rx=2)


def small_spec(scenario, out, **kw):
    base = dict(
        config=SMALL,
        output_dir=out,
        trials=200,
        mn_pairs=((8, 10), (6, 10)),
        snr_grid_db=(100.0, 120.0, 140.0),
        ebn0_grid_db=(-10.0, 0.0, 10.0),
        max_iters=10,
        starts=2,
    )
    base.update(kw)
    return ex.ExperimentSpec(scenario, **base)


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


@pytest.mark.parametrize(
    "kw",
    [
        {"snr_grid_db": (10.0, 5.0)},
        {"ebn0_grid_db": ()},
        {"mn_pairs": ((0, 4),)},
        {"curves": ("optimized", "bogus")},
        {"trials": 1},
        {"bound_form": "loose"},
    ],
)
def test_spec_validation(tmp_path, kw):
    with pytest.raises(ValueError):
        small_spec("capacity_sweep", tmp_path, **kw)
    with pytest.raises(ValueError):
        ex.ExperimentSpec("unknown")


def test_spec_defaults():
    spec = ex.ExperimentSpec("capacity_sweep")
    assert spec.n_trials == 2000 and ex.ExperimentSpec("validate").n_trials == 10_000
    assert 10 * math.log10(spec.reference_snr) == pytest.approx(130.0)
    assert spec.master_seed == 1 and ex.ExperimentSpec("low_snr", seed=5).master_seed == 5


def test_capacity_sweep_outputs(tmp_path):
    res = ex.run_capacity_sweep(small_spec("capacity_sweep", tmp_path))
    text = res["csv"].read_text()
    assert text.startswith("# simcap capacity_sweep\n# seed=1\n# config=")
    lines = body(res["csv"])
    assert lines[0] == "m,n,curve,snr_db,c_lb,c_mc,ci,ebn0min_db,s0,trials,seed"
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 2 * 3 * 3
    assert {r[2] for r in rows} == set(ex.CURVES)
    for r in rows:
        assert float(r[4]) <= float(r[5]) + float(r[6])
    random_rows = [r for r in rows if r[2] == "random_phase"]
    assert all(int(r[9]) == 200 * ex.RANDOM_PROFILES for r in random_rows)
    assert "capacity_sweep.csv" in res["gp"].read_text()
    assert "\r" not in text


def test_iid_baseline_is_identity_channel(tmp_path):
    spec = small_spec("capacity_sweep", tmp_path, curves=("iid_baseline",), mn_pairs=((8, 10),))
    rows = [r.split(",") for r in body(ex.run_capacity_sweep(spec)["csv"])[1:]]
    # literal iid: C_LB is the square iid bound with entry variance beta/M
    sc = ex.build_scene(SMALL)
    var = sc.beta / sc.m
    for r in rows:
        rho = 10 ** (float(r[3]) / 10)
        expected = metrics.matthaiou_bound(2, rho * var)
        assert float(r[4]) == pytest.approx(expected, rel=1e-9)
        assert float(r[7]) == pytest.approx(10 * math.log10(math.log(2) / 2), rel=1e-9)


def test_low_snr_outputs(tmp_path):
    res = ex.run_low_snr(small_spec("low_snr", tmp_path))
    rows = [r.split(",") for r in body(res["csv"])[1:]]
    iid = [r for r in rows if r[0] == "iid_baseline"]
    assert float(iid[0][5]) == pytest.approx(10 * math.log10(math.log(2) / 2), abs=1e-9)
    assert float(iid[0][6]) == pytest.approx(2.0)
    for r in rows:
        if r[1] == "analytic" and abs(float(r[2]) - float(r[5])) < 1e-12:
            assert float(r[3]) == 0.0
        if r[1] == "analytic" and float(r[2]) < float(r[5]):
            assert float(r[3]) == 0.0
    # MC points sit near the analytic curve's minimum energy per bit at low SNR
    mc_iid = [r for r in iid if r[1] == "mc"]
    assert float(mc_iid[0][2]) == pytest.approx(float(mc_iid[0][5]), abs=0.2)


def test_convergence_outputs(tmp_path):
    res = ex.run_convergence(small_spec("convergence", tmp_path, starts=3))
    lines = body(res["csv"])
    assert lines[0] == "start,iter,objective,step_tx,step_rx"
    rows = [list(map(float, line.split(","))) for line in lines[1:]]
    for s in range(3):
        traj = [r[2] for r in rows if r[0] == s]
        assert np.all(np.diff(traj) >= 0)
    footer = [l for l in res["csv"].read_text().splitlines() if l.startswith("# start")]
    assert len(footer) == 3 and all("monotone=True" in l for l in footer)


@pytest.mark.parametrize("scenario", ["capacity_sweep", "low_snr", "convergence"])
def test_scenarios_byte_identical_across_workers(tmp_path, scenario):
    a = ex.run(small_spec(scenario, tmp_path / "a", workers=1))
    b = ex.run(small_spec(scenario, tmp_path / "b", workers=3))
    assert a["csv"].read_bytes() == b["csv"].read_bytes()
    assert a["gp"].read_bytes() == b["gp"].read_bytes()


def test_numbers_use_twelve_significant_digits():
    assert ex._fmt(1 / 3) == "0.333333333333"
    assert ex._fmt(2) == "2" and ex._fmt(True) == "1" and ex._fmt(1e-40 / 3) == "3.33333333333e-41"


@pytest.fixture(scope="module")
def validate_result(tmp_path_factory):
    out = tmp_path_factory.mktemp("validate")
    return ex.run_validate(ex.ExperimentSpec("validate", output_dir=out, trials=400))


def test_validate_passes(validate_result):
    report = validate_result["report"]
    assert validate_result["ok"], {k: v for k, v in report.items() if not v["pass"]}
    for entry in report.values():
        assert set(entry) == {"pass", "metric", "threshold"}
    assert json.loads(validate_result["json"].read_text()) == report


def test_validate_is_deterministic(tmp_path, validate_result):
    again = ex.run_validate(ex.ExperimentSpec("validate", output_dir=tmp_path, trials=400))
    assert again["json"].read_bytes() == validate_result["json"].read_bytes()


def test_gradient_negative_control():
    def corrupt(g):
        return g[0] + 1e-3 * np.abs(g[0]).max(), g[1] + 1e-3 * np.abs(g[1]).max()

    good = ex.gradient_probe_errors("ebmin", 5, 1, SystemConfig())
    bad = ex.gradient_probe_errors("ebmin", 5, 1, SystemConfig(), hook=corrupt)
    assert max(good) < 1e-5 < max(bad)


def test_cli_runs_convergence(tmp_path, capsys):
    code = main(
        ["convergence", "--out", str(tmp_path), "--set", "m_tx=8", "--set", "n_rx=10", "--set", "n_t=2",
         "--set", "n_r=2", "--set", "layers_tx=2", "--set", "layers_rx=2", "--max-iters", "5", "--starts", "2",
         "--objective", "s0", "--seed", "9"]
    )
    assert code == 0
    text = (tmp_path / "convergence.csv").read_text()
    assert "# seed=9" in text and '"m_tx": 8' in text and '"objective": "s0"' in text
    assert "csv:" in capsys.readouterr().out


def test_cli_config_file_and_grids(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_t": 2, "n_r": 2, "m_tx": 6, "n_rx": 8, "layers_tx": 2, "layers_rx": 2}))
    code = main(
        ["capacity_sweep", "--config", str(cfg), "--out", str(tmp_path), "--trials", "50", "--pairs", "6x8",
         "--snr-grid", "100,130", "--curves", "random_phase,iid_baseline", "--bound-form", "compressed"]
    )
    assert code == 0
    rows = body(tmp_path / "capacity_sweep.csv")[1:]
    assert len(rows) == 4 and all(r.startswith("6,8,") for r in rows)


def test_cli_rejects_bad_input(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["low_snr", "--set", "bogus=1", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])
