#!/usr/bin/env python3
"""
Tests for the command line, configuration handling and result files.
"""

import os
import json
import tempfile

import openpyxl
import pandas as pd
import pytest

from Core.config import ExperimentConfig, load_config
from Core.exceptions import ConfigError
from Core.utils.constants import ExitCode
from main import main

REPLAYS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "Data", "replays")
SMALL = 'dataset={"synthetic": {"kind": "zipf", "n": 300, "d": 30}}'

def _run(directory, *extra):
    return main(["--quiet", "run", "--output", directory, "--trials", "2", "--set", SMALL, *extra])

def test_run_writes_csv_and_manifest():
    with tempfile.TemporaryDirectory() as directory:
        assert _run(directory) == ExitCode.SUCCESS
        frame = pd.read_csv(os.path.join(directory, "run.csv"))
        assert {'metric', 'mean', 'stderr', 'config_hash'} <= set(frame.columns)
        assert 'c_tot' in set(frame['metric'])
        with open(os.path.join(directory, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest['files'] == ["run.csv"]
        assert manifest['config_hash'] == frame['config_hash'].iloc[0]
        assert manifest['config']['trials'] == 2

def test_rerun_is_byte_identical():
    with tempfile.TemporaryDirectory() as directory:
        path = os.path.join(directory, "run.csv")
        assert _run(directory, "--seed", "5") == ExitCode.SUCCESS
        with open(path, 'rb') as f:
            first = f.read()
        assert _run(directory, "--seed", "5") == ExitCode.SUCCESS
        with open(path, 'rb') as f:
            assert f.read() == first

def test_manifest_config_reproduces_the_run():
    with tempfile.TemporaryDirectory() as directory:
        assert _run(directory, "--protocol", "lnf") == ExitCode.SUCCESS
        with open(os.path.join(directory, "manifest.json")) as f:
            config = json.load(f)['config']
        with open(os.path.join(directory, "run.csv"), 'rb') as f:
            first = f.read()
        config_path = os.path.join(directory, "config.json")
        with open(config_path, 'w') as f:
            json.dump(config, f)
        assert main(["--quiet", "run", "--config", config_path]) == ExitCode.SUCCESS
        with open(os.path.join(directory, "run.csv"), 'rb') as f:
            assert f.read() == first

def test_xlsx_has_styled_header():
    with tempfile.TemporaryDirectory() as directory:
        assert _run(directory, "--xlsx") == ExitCode.SUCCESS
        wb = openpyxl.load_workbook(os.path.join(directory, "results.xlsx"))
        ws = wb["run"]
        assert ws.cell(row=1, column=1).font.bold
        assert ws.cell(row=1, column=1).value == "x"

def test_replay_command():
    assert main(["--quiet", "replay", os.path.join(REPLAYS, "toy_example.json")]) == ExitCode.SUCCESS
    assert main(["--quiet", "replay", os.path.join(REPLAYS, "lnf_sampling.json")]) == ExitCode.SUCCESS
    with tempfile.TemporaryDirectory() as directory:
        with open(os.path.join(REPLAYS, "toy_example.json")) as f:
            document = json.load(f)
        document['expected']['estimates'][1] = 0.5
        path = os.path.join(directory, "broken.json")
        with open(path, 'w') as f:
            json.dump(document, f)
        assert main(["--quiet", "replay", path]) == ExitCode.REPLAY_MISMATCH
        assert main(["--quiet", "replay", os.path.join(directory, "missing.json")]) == ExitCode.CONFIG_ERROR

def test_config_errors_exit_with_two():
    with tempfile.TemporaryDirectory() as directory:
        assert _run(directory, "--set", "beta=2") == ExitCode.CONFIG_ERROR
        assert _run(directory, "--set", "colour=1") == ExitCode.CONFIG_ERROR
        assert _run(directory, "--protocol", "rappor") == ExitCode.CONFIG_ERROR
        assert _run(directory, "--set", 'dataset={"synthetic": {"kind": "kv", "n": 50, "d": 5}}') \
            == ExitCode.CONFIG_ERROR

def test_calibration_infeasible_exits_with_three():
    assert main(["--quiet", "calibrate", "--delta", "0"]) == ExitCode.CALIBRATION_INFEASIBLE

def test_dataset_error_exits_with_four():
    with tempfile.TemporaryDirectory() as directory:
        missing = json.dumps({"path": os.path.join(directory, "absent.csv")})
        assert main(["--quiet", "run", "--output", directory, "--set", f"dataset={missing}"]) \
            == ExitCode.DATASET_ERROR

def test_calibrate_writes_json():
    with tempfile.TemporaryDirectory() as directory:
        assert main(["--quiet", "calibrate", "--output", directory, "--write"]) == ExitCode.SUCCESS
        with open(os.path.join(directory, "calibration.json")) as f:
            summary = json.load(f)
        assert summary['d1']['delta'] <= 0.25e-12
        assert summary['d2']['mean'] > 0

def test_certify_command():
    args = ["--quiet", "certify", "--dist", "binomial", "--param", "m=10", "--param", "p=0.5", "--eps", "1"]
    assert main(args) == ExitCode.SUCCESS
    assert main(["--quiet", "certify", "--dist", "laplace", "--eps", "1"]) == ExitCode.CONFIG_ERROR

def test_collusion_sweep():
    with tempfile.TemporaryDirectory() as directory:
        args = ["--quiet", "sweep", "--kind", "collusion", "--values", "0,0.5,0.9", "--protocol", "lnf",
                "--output", directory, "--set", 'dataset={"synthetic": {"kind": "zipf", "n": 5000, "d": 30}}']
        assert main(args) == ExitCode.SUCCESS
        frame = pd.read_csv(os.path.join(directory, "collusion.csv"))
        lnf = frame[frame['protocol'] == 'lnf']
        assert len(lnf) == 3 and (lnf['actual_eps'] == 1.0).all()
        assert set(frame['protocol']) == {'lnf', 'pure_grr'}

def _b_grid(directory, l_policy):
    point_mass = json.dumps({name: {"kind": "point_mass", "params": {"k": 10}} for name in ("d1", "d2")})
    args = ["--quiet", "sweep", "--kind", "b_grid", "--protocol", "fme", "--trials", "2", "--output", directory,
            "--set", 'dataset={"synthetic": {"kind": "zipf", "n": 1000, "d": 20000, "exponent": 0.0}}',
            "--set", f"dist={point_mass}", "--set", f"l_policy={l_policy}"]
    assert main(args) == ExitCode.SUCCESS
    return pd.read_csv(os.path.join(directory, "b_grid.csv"))

def test_b_grid_cost_is_lowest_near_the_optimized_b():
    for l_policy in ("b", "50"):
        with tempfile.TemporaryDirectory() as directory:
            frame = _b_grid(directory, l_policy)
        assert frame['multiple'].tolist() == [0.25, 0.5, 1.0, 2.0, 4.0]
        assert frame['b'].is_monotonic_increasing
        assert abs(int(frame['c_tot_mean'].idxmin()) - 2) <= 1

def test_malformed_flag_values_exit_with_two():
    with tempfile.TemporaryDirectory() as directory:
        certify = ["--quiet", "certify", "--dist", "binomial", "--eps", "1"]
        assert main(certify + ["--param", "m=abc", "--param", "p=0.5"]) == ExitCode.CONFIG_ERROR
        assert main(certify + ["--param", "m10"]) == ExitCode.CONFIG_ERROR
        sweep = ["--quiet", "sweep", "--kind", "collusion", "--output", directory, "--set", SMALL]
        assert main(sweep + ["--values", "0,x"]) == ExitCode.CONFIG_ERROR
        attack = ["--quiet", "attack", "--protocol", "lnf", "--output", directory, "--set", SMALL]
        assert main(attack + ["--targets", "a", "--lambdas", "0.1"]) == ExitCode.CONFIG_ERROR
        assert main(attack + ["--targets", "1", "--lambdas", "lots"]) == ExitCode.CONFIG_ERROR

def test_attack_command():
    with tempfile.TemporaryDirectory() as directory:
        args = ["--quiet", "attack", "--protocol", "lnf", "--targets", "1,2", "--lambdas", "0.1", "--trials", "2",
                "--output", directory, "--set", SMALL]
        assert main(args) == ExitCode.SUCCESS
        frame = pd.read_csv(os.path.join(directory, "gain.csv"))
        assert len(frame) == 1 and frame['lambda'].iloc[0] == pytest.approx(0.1, abs=0.01)

def test_predict_command():
    with tempfile.TemporaryDirectory() as directory:
        args = ["--quiet", "predict", "--trials", "3", "--output", directory, "--set", SMALL]
        assert main(args) == ExitCode.SUCCESS
        frame = pd.read_csv(os.path.join(directory, "predict.csv"))
        row = frame[frame['quantity'] == 'c_us'].iloc[0]
        assert row['rel_error'] == pytest.approx(0.0)

def test_validation_lists_every_problem():
    with pytest.raises(ConfigError) as info:
        load_config(overrides=["beta=2", "trials=0", "cipher.kind=\"rsa\""])
    message = str(info.value)
    assert "beta" in message and "trials" in message and "cipher.kind" in message

def test_config_documents_and_overrides():
    config = ExperimentConfig.from_dict({'budget': {'eps': 2.0}, 'protocol': 'kv'})
    assert config.budget['eps'] == 2.0 and config.budget['delta'] == 1e-12
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'epsilon': 1.0})
    config.apply_overrides(["budget.eps=0.5", "filter_level=pair", "sweep.kind=\"mse\""])
    assert config.get_value('budget.eps') == 0.5
    assert config.filter_level == "pair" and config.sweep == {'kind': 'mse'}
    derived = config.derive('beta', 0.5)
    assert derived.beta == 0.5 and config.beta == 1.0
    assert derived.hash() != config.hash()
    assert ExperimentConfig().hash() == ExperimentConfig().hash()
    with pytest.raises(ConfigError):
        config.apply_overrides(["beta"])

def main_tests():
    """Run the command line tests."""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"\nAll {len(tests)} command line tests passed")

if __name__ == "__main__":
    main_tests()
