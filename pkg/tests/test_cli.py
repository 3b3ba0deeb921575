import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from uavurllc.cli import main, paired_difference
from uavurllc.config import ConfigError, RunConfig, from_dict, load_config


@pytest.fixture
def small_config(tmp_path, small_dataset):
    cfg = {
        "scenario": {"num_users": 3, "num_rbs": 8},
        "traffic": {"dataset": str(small_dataset), "window": 40, "refit_every": 60, "max_arrivals": 200.0},
        "sweep": {"trials": 2},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


# -- configuration ---------------------------------------------------------------


def test_defaults_hold_reference_values():
    cfg = load_config()
    assert cfg.scenario.num_users == 20 and cfg.scenario.num_rbs == 50
    assert cfg.scenario.total_power_w == 10.0 and cfg.scenario.packet_size_bytes == 32.0
    assert cfg.scenario.altitude_range_m == [100.0, 150.0]
    ch = cfg.channel_params()
    assert ch.gamma0 == pytest.approx(1e-3)
    assert ch.noise_density == pytest.approx(10 ** (-17.4) * 1e-3)
    assert ch.blocklength == 168 and ch.decode_err == 1e-5 and ch.rician_k == 10.0
    assert cfg.traffic.window == 600


def test_config_round_trip_is_byte_identical(tmp_path):
    text = load_config().dump()
    p = tmp_path / "c.yaml"
    p.write_text(text, encoding="utf-8")
    again = load_config(p).dump()
    assert again == text
    p.write_text(again, encoding="utf-8")
    assert load_config(p).dump() == text


@settings(max_examples=30, deadline=None)
@given(users=st.integers(1, 40), eps=st.floats(1e-4, 0.5), trials=st.integers(1, 50),
       seed=st.integers(0, 2**63))
def test_config_round_trip_property(users, eps, trials, seed):
    cfg = from_dict({"master_seed": seed, "scenario": {"num_users": users, "outage_eps": eps},
                     "sweep": {"trials": trials}})
    assert from_dict(yaml.safe_load(cfg.dump())).dump() == cfg.dump()


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text("", encoding="utf-8")
    assert load_config(p).dump() == RunConfig().dump()


@pytest.mark.parametrize("overrides, match", [
    ({"scenario": {"bogus": 1}}, "bogus"),
    ({"nope": {}}, "nope"),
    ({"scenario": {"num_users": "many"}}, "integer"),
    ({"scenario": {"num_users": 2.5}}, "integer"),
    ({"scenario": {"outage_eps": 1.5}}, "outage_eps"),
    ({"solver": {"rounding_threshold": 0.0}}, "rounding_threshold"),
    ({"traffic": {"inputs": "values"}}, "inputs"),
    ({"output": {"formats": ["xml"]}}, "xml"),
    ({"scenario": []}, "mapping"),
])
def test_bad_config_rejected(overrides, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(overrides)


def test_numeric_strings_accepted_for_floats():
    assert from_dict({"channel": {"decode_err": "1e-6"}}).channel.decode_err == 1e-6


def test_digest_ignores_output_location():
    a, b = RunConfig(), RunConfig()
    b.output.directory = "elsewhere"
    b.output.workers = 4
    assert a.digest() == b.digest()
    b.master_seed = 1
    assert a.digest() != b.digest()


# -- commands --------------------------------------------------------------------


def read_table(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    return lines[0], lines[1].split(","), [line.split(",") for line in lines[2:]]


def test_show_config(capsys, small_config):
    code, out = run(capsys, "show-config", "--config", small_config)
    assert code == 0
    assert yaml.safe_load(out.out)["scenario"]["num_users"] == 3


def test_predict(capsys, small_config, tmp_path):
    code, out = run(capsys, "predict", "--config", small_config, "--out", tmp_path / "o")
    assert code == 0 and "MSE" in out.out
    header, cols, rows = read_table(tmp_path / "o" / "prediction_trace.csv")
    assert header.startswith("# master_seed=0 config_sha256=")
    assert cols == ["slot", "observed", "predicted_mean", "predicted_variance", "squared_error"]
    assert len(rows) == 160 - 40
    summary = json.loads((tmp_path / "o" / "prediction_summary.json").read_text())
    assert summary["predictions"] == 120 and summary["mse"] < 0.05


def test_solve(capsys, small_config, tmp_path):
    code, out = run(capsys, "solve", "--config", small_config, "--out", tmp_path)
    assert code == 0 and "converged" in out.out
    doc = json.loads((tmp_path / "solve.json").read_text())
    a = np.array(doc["allocation"]["assign"])
    p = np.array(doc["allocation"]["power_w"])
    assert np.all(a.sum(axis=0) <= 1) and np.sum(a * p) <= 10.0
    assert all(s >= -1e-6 * max(r, 1) for s, r in zip(doc["reliability_slack_bps"], doc["required_rate_bps"]))
    assert (tmp_path / "solve_trace.csv").read_text().startswith("# master_seed=0")


def test_solve_infeasible_exit_code(capsys, small_config, tmp_path):
    code, out = run(capsys, "solve", "--config", small_config, "--out", tmp_path, "--seed", "3")
    assert code == 0
    bad = tmp_path / "bad.yaml"
    cfg = yaml.safe_load(small_config.read_text())
    cfg["scenario"].update(num_rbs=2, outage_eps=1e-4)
    bad.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    code, out = run(capsys, "solve", "--config", bad, "--out", tmp_path)
    assert code == 3
    assert "slack" in out.err


def test_config_error_exit_code(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenario:\n  colour: blue\n", encoding="utf-8")
    code, out = run(capsys, "solve", "--config", p)
    assert code == 2 and "colour" in out.err
    code, _ = run(capsys, "solve", "--config", tmp_path / "missing.yaml")
    assert code == 2
    code, _ = run(capsys, "predict", "--seed", "-1")
    assert code == 2


def test_dataset_error_exit_code(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(f"traffic:\n  dataset: {tmp_path / 'none.csv'}\n", encoding="utf-8")
    code, out = run(capsys, "predict", "--config", p)
    assert code == 4 and "none.csv" in out.err
    short = tmp_path / "short.csv"
    short.write_text("Date,Close\n1,2\n2,3\n", encoding="utf-8")
    p.write_text(f"traffic:\n  dataset: {short}\n", encoding="utf-8")
    code, _ = run(capsys, "solve", "--config", p)
    assert code == 4


def test_sweep_outputs(capsys, small_config, tmp_path):
    code, _ = run(capsys, "sweep", "--config", small_config, "--out", tmp_path, "--axis", "users",
                  "--values", "2,3", "--strategy", "proposed,max_power")
    assert code == 0
    for s in ("proposed", "max_power"):
        header, cols, rows = read_table(tmp_path / f"sweep_users_{s}.csv")
        assert header.startswith("# master_seed=") and cols[0] == "value" and len(rows) == 2
        for metric in ("energy", "sum_rate", "per_user_rate", "violation_freq"):
            for kind in ("mean", "std"):
                lines = (tmp_path / f"plot_users_{s}_{metric}_{kind}.dat").read_text().splitlines()
                assert lines[0].startswith("# master_seed=")
                assert [len(line.split()) for line in lines[1:]] == [2, 2]
    assert not (tmp_path / "sweep_users_random_placement.csv").exists()
    _, cols, rows = read_table(tmp_path / "records_users.csv")
    assert cols[:9] == ["trial", "slot", "strategy", "objective", "energy_j", "sum_rate_bps",
                        "min_user_rate_bps", "violations", "infeasible_flag"]
    assert len(rows) == 2 * 2 * 2


def test_sweep_bad_arguments(capsys, small_config, tmp_path):
    code, _ = run(capsys, "sweep", "--config", small_config, "--out", tmp_path, "--axis", "eps", "--values", "a,b")
    assert code == 2
    code, _ = run(capsys, "sweep", "--config", small_config, "--out", tmp_path, "--axis", "eps",
                  "--strategy", "teleport")
    assert code == 2
    code, _ = run(capsys, "sweep", "--config", small_config, "--out", tmp_path, "--axis", "eps", "--values", "1.5")
    assert code == 2


def test_compare_single_trial_degenerate_interval(capsys, small_config, tmp_path):
    code, out = run(capsys, "compare", "--config", small_config, "--out", tmp_path, "--trials", "1")
    assert code == 0
    doc = json.loads((tmp_path / "compare.json").read_text())
    for other in ("max_power", "random_placement"):
        for d in doc["paired_proposed_minus"][other].values():
            assert d["ci_low"] == d["mean"] == d["ci_high"]
    for s in ("proposed", "max_power", "random_placement"):
        assert "violation_freq_mean" in doc["strategies"][s]


def test_reruns_are_byte_identical(capsys, small_config, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "compare", "--config", small_config, "--out", tmp_path / d, "--trials", "2")[0] == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_paired_difference():
    d = paired_difference([3.0, 5.0, 7.0], [1.0, 1.0, 1.0])
    assert d["mean"] == 4.0 and d["n"] == 3
    half = 1.96 * 2.0 / np.sqrt(3)
    assert d["ci_low"] == pytest.approx(4.0 - half) and d["ci_high"] == pytest.approx(4.0 + half)
