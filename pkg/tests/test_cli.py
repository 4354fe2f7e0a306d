import json
from pathlib import Path

import pytest

from triggers import directed_inputs
from mlefuzz.cli import EXIT_CRASH, EXIT_ERROR, EXIT_NOT_REPRODUCED, EXIT_OK, main
from mlefuzz.config import ConfigError, load_config, parse_config
from mlefuzz.harness import HarnessState
from mlefuzz.mle import MessageType as M

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PREFIX_LEN = "network_data_tlv[0].prefix_tlv[0].prefix_length"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def v1_config(tmp_path):
    return _write(tmp_path, "v1.json", json.dumps({
        "fuzzers": [{"kind": "set_field", "message_type": int(M.CHILD_ID_RESPONSE), "path": PREFIX_LEN,
                     "value": 255, "limit": 1}],
        "dut": {"type": "mtd"}, "iterations": 2}))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_load(name):
    load_config(CONFIGS / name)


def test_config_defaults_and_overrides():
    cfg = parse_config({}, seed=4, iterations=9)
    assert (cfg.seed, cfg.max_iterations, cfg.node_type, cfg.sanitizer) == (4, 9, "ftd", True)
    assert parse_config(None).max_iterations == 1000


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"dut": {"type": "router"}},
    {"fuzzers": [{"kind": "nope"}]},
    {"fuzzers": [{"kind": "random", "k": -1}]},
    {"iterations": 0},
    {"coverage": {"source": "oracle"}},
    [1, 2],
])
def test_bad_config_raises(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "broken.yaml", "fuzzers: [\n"))


def test_fuzz_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    code = main(["fuzz", "--config", str(CONFIGS / "random_mtd.yaml"), "--iterations", "30", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_CRASH)
    doc = json.loads((out / "report.json").read_text())
    assert doc["iterations"] == 30
    assert (out / "coverage.csv").exists()
    assert (code == EXIT_CRASH) == bool(doc["crash_files"])


def test_fuzz_missing_config_exits_1(tmp_path):
    assert main(["fuzz", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == EXIT_ERROR


def test_fuzz_then_replay(tmp_path, v1_config):
    out = tmp_path / "out"
    assert main(["fuzz", "--config", str(v1_config), "--out", str(out)]) == EXIT_CRASH
    crashes = sorted((out / "crashes").glob("*.json"))
    assert crashes and "V1" in crashes[0].name
    assert main(["replay", str(crashes[0])]) == EXIT_CRASH
    assert main(["replay", str(crashes[0]), "--sanitizer", "off"]) == EXIT_CRASH

    doc = json.loads(crashes[0].read_text())
    doc["packets"] = doc["packets"][:-1]  # drop the crashing frame
    assert main(["replay", str(_write(tmp_path, "cut.json", json.dumps(doc)))]) == EXIT_NOT_REPRODUCED


def test_replay_bad_files(tmp_path):
    assert main(["replay", str(_write(tmp_path, "empty.json", ""))]) == EXIT_ERROR
    assert main(["replay", str(_write(tmp_path, "junk.json", "{not json"))]) == EXIT_ERROR
    assert main(["replay", str(_write(tmp_path, "shape.json", json.dumps({"vuln": "V1"})))]) == EXIT_ERROR
    assert main(["replay", str(tmp_path / "absent.json")]) == EXIT_ERROR


def test_harness_command(tmp_path, capsys):
    inp, san = directed_inputs()["V2"]
    path = _write(tmp_path, "v2.bin", "")
    path.write_bytes(inp.to_bytes())
    args = ["harness", "--input", str(path)]
    assert main(args + ["--sanitizer"]) == EXIT_CRASH
    res = json.loads(capsys.readouterr().out)
    assert res["vuln"] == "V2" and res["reached_state"]
    assert main(args) == EXIT_OK
    path.write_bytes(bytes([1, int(HarnessState.ROUTER)]))
    assert main(args) == EXIT_OK
    assert main(["harness", "--input", str(tmp_path / "absent.bin")]) == EXIT_ERROR


def test_epoch_command(tmp_path, capsys, v1_config):
    assert main(["epoch", "--config", str(v1_config), "--epoch-size", "2"]) == EXIT_CRASH
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert lines[0]["crash_detected"] and lines[0]["reboot_count_after"] > lines[0]["reboot_count_before"]
    assert main(["epoch", "--config", str(v1_config), "--epoch-size", "0"]) == EXIT_ERROR


def test_report_command(tmp_path, capsys):
    paths = []
    for seed in (1, 2):
        out = tmp_path / f"run{seed}"
        main(["fuzz", "--config", str(CONFIGS / "random_mtd.yaml"), "--iterations", "40", "--seed", str(seed),
              "--out", str(out)])
        paths.append(str(out / "report.json"))
    capsys.readouterr()
    csv_path, sum_path = tmp_path / "cov.csv", tmp_path / "sum.csv"
    assert main(["report", *paths, "--csv", str(csv_path), "--summary-csv", str(sum_path)]) == EXIT_OK
    assert "runs: 2" in capsys.readouterr().out
    assert csv_path.read_text().splitlines()[0] == "iteration,run0,run1,mean"
    assert len(sum_path.read_text().splitlines()) == 7

    other = tmp_path / "ftd"
    main(["fuzz", "--config", str(CONFIGS / "random_ftd.yaml"), "--iterations", "5", "--out", str(other)])
    assert main(["report", paths[0], str(other / "report.json")]) == EXIT_ERROR
    assert main(["report", str(_write(tmp_path, "bad.json", "{}"))]) == EXIT_ERROR
