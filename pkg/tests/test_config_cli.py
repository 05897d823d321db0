import json
import math

import pytest
import yaml
from click.testing import CliRunner

from bellqkd.channels import LossSpec
from bellqkd.cli import EXIT_CONFIG, main
from bellqkd.config import (
    ConfigError,
    ExperimentName,
    config_hash,
    load_config,
    parse_grid,
    parse_quantity,
    resolved_dict,
)

SMALL_FIDELITY = {
    "experiment": "fbs_fidelity",
    "params": {
        "eps": "3 GHz",
        "theta": {"start": "0 rad", "stop": "3.14159 rad", "num": 3},
        "phi": ["0 rad"],
    },
}

SMALL_LOSS = {
    "experiment": "loss_keyrate",
    "protocols": ["boileau4", "bb84"],
    "mode": "full_tomography",
    "params": {"loss": ["0 dB", "10 dB"], "fit_max_db": 10},
}


def write_yaml(path, data) -> str:
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_quantity_units() -> None:
    assert abs(parse_quantity("1 THz", "frequency") - 2 * math.pi) < 1e-15
    assert abs(parse_quantity("0.6 GHz", "frequency") - 0.6e-3 * 2 * math.pi) < 1e-18
    assert parse_quantity("1 ns", "time") == 1000.0
    assert abs(parse_quantity("0.5 pi", "angle") - math.pi / 2) < 1e-15
    (db,) = parse_grid("10 dB", "loss")
    assert abs(LossSpec.from_db(db).p - 0.1) < 1e-15


@pytest.mark.parametrize("bad", [0.6, "0.6", "0.6 furlongs", "3 ps"])
def test_quantity_requires_matching_unit(bad) -> None:
    with pytest.raises(ValueError):
        parse_quantity(bad, "frequency")


def test_grid_forms() -> None:
    assert parse_grid(["1 ps", "2 ps"], "time") == (1.0, 2.0)
    g = parse_grid({"start": "0 ps", "stop": "1 ps", "num": 5}, "time")
    assert g == (0.0, 0.25, 0.5, 0.75, 1.0)
    with pytest.raises(ValueError):
        parse_grid({"start": "0 ps", "stop": "1 ps", "num": 0}, "time")
    with pytest.raises(ValueError):
        parse_grid({"start": "0 ps", "num": 2}, "time")


def test_missing_unit_names_field_path() -> None:
    with pytest.raises(ConfigError) as info:
        load_config({"experiment": "fbs_fidelity", "params": {"eps": 3.0}})
    assert "params.eps" in str(info.value)
    with pytest.raises(ConfigError) as info:
        load_config({"experiment": "fbs_fidelity", "encoding": {"sigma_t": 17}})
    assert "encoding.sigma_t" in str(info.value)


def test_unknown_keys_rejected() -> None:
    with pytest.raises(ConfigError):
        load_config({"experiment": "fbs_fidelity", "colour": "blue"})
    with pytest.raises(ConfigError):
        load_config({"experiment": "fbs_fidelity", "params": {"epsilon": "3 GHz"}})
    with pytest.raises(ConfigError):
        load_config({"experiment": "no_such_thing"})


def test_protocol_lists_checked() -> None:
    with pytest.raises(ConfigError):
        load_config({"experiment": "fbs_keyrate", "protocols": []})
    with pytest.raises(ConfigError):
        load_config({"experiment": "fbs_fidelity", "protocols": ["bb84"]})
    with pytest.raises(ConfigError):
        load_config({"experiment": "fbs_keyrate", "protocols": ["e91"]})


def test_minimal_config_resolves_defaults() -> None:
    cfg = load_config({"experiment": "fbs_keyrate"})
    assert cfg.experiment is ExperimentName.FBS_KEYRATE
    assert cfg.protocols
    assert cfg.mode_for(cfg.protocols[0]) in ("full_tomography", "frank_wolfe")
    res = resolved_dict(cfg)
    assert res["encoding"]["sigma_t"] == "17 ps"
    assert res["params"]["mu"].endswith("GHz")


def test_dispersion_encoding_defaults() -> None:
    cfg = load_config({"experiment": "dispersion_keyrate"})
    assert cfg.encoding.sigma_t == 30.0


@pytest.mark.parametrize("name", [e.value for e in ExperimentName])
def test_resolved_config_round_trips(name: str) -> None:
    cfg = load_config({"experiment": name})
    echo = resolved_dict(cfg)
    again = load_config(yaml.safe_load(yaml.safe_dump(echo)))
    assert resolved_dict(again) == echo
    assert config_hash(again) == config_hash(cfg)


def test_hash_tracks_content() -> None:
    a = load_config(SMALL_LOSS)
    b = load_config({**SMALL_LOSS, "seed": 1})
    assert config_hash(a) == config_hash(load_config(SMALL_LOSS))
    assert config_hash(a) != config_hash(b)


def test_cli_list_experiments() -> None:
    runner = CliRunner()
    res = runner.invoke(main, ["list-experiments"])
    assert res.exit_code == 0
    for e in ExperimentName:
        assert e.value in res.output
    res = runner.invoke(main, ["list-experiments", "--json"])
    doc = json.loads(res.output)
    assert {d["name"] for d in doc} == {e.value for e in ExperimentName}
    assert all(d["description"] for d in doc)


def test_cli_validate(tmp_path) -> None:
    runner = CliRunner()
    path = write_yaml(tmp_path / "c.yaml", SMALL_LOSS)
    res = runner.invoke(main, ["validate", path, "--json"])
    assert res.exit_code == 0
    doc = json.loads(res.output)
    assert doc["params"]["loss"] == ["0 dB", "10 dB"]
    res = runner.invoke(main, ["validate", path])
    assert res.exit_code == 0 and "loss_keyrate" in res.output


def test_cli_rejects_bad_config(tmp_path) -> None:
    runner = CliRunner()
    bad = write_yaml(tmp_path / "bad.yaml", {"experiment": "fbs_fidelity", "params": {"eps": 3}})
    for verb in ("validate", "run"):
        res = runner.invoke(main, [verb, bad])
        assert res.exit_code == EXIT_CONFIG
        assert "params.eps" in res.output
    res = runner.invoke(main, ["validate", str(tmp_path / "missing.yaml")])
    assert res.exit_code == EXIT_CONFIG
    broken = tmp_path / "broken.yaml"
    broken.write_text("experiment: [unclosed\n")
    assert runner.invoke(main, ["validate", str(broken)]).exit_code == EXIT_CONFIG


@pytest.mark.parametrize("config", [SMALL_FIDELITY, SMALL_LOSS])
def test_cli_run_is_deterministic(tmp_path, config) -> None:
    runner = CliRunner()
    path = write_yaml(tmp_path / "c.yaml", config)
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        res = runner.invoke(main, ["run", path, "-o", str(out)])
        assert res.exit_code == 0, res.output
        outs.append(out)
    stem = config["experiment"]
    for suffix in (".csv", ".jsonl", ".resolved.yaml", ".summary.json"):
        a, b = (o / f"{stem}{suffix}" for o in outs)
        assert a.read_bytes() == b.read_bytes()
    assert (outs[0] / f"plot_{stem}.py").exists()
    rows = [json.loads(line) for line in (outs[0] / f"{stem}.jsonl").read_text().splitlines()]
    assert rows and all(r["config_hash"] == rows[0]["config_hash"] for r in rows)
    assert (outs[0] / f"{stem}.csv").read_bytes().count(b"\r\n") == len(rows) + 1


def test_cli_run_loss_values(tmp_path) -> None:
    runner = CliRunner()
    path = write_yaml(tmp_path / "c.yaml", SMALL_LOSS)
    out = tmp_path / "out"
    assert runner.invoke(main, ["run", path, "-o", str(out)]).exit_code == 0
    rows = [json.loads(line) for line in (out / "loss_keyrate.jsonl").read_text().splitlines()]
    bb = {r["loss_dB"]: r["lower_bound"] for r in rows if r["protocol"] == "bb84"}
    assert abs(bb[0.0] - 0.5) < 1e-6
    assert abs(bb[10.0] - 0.05) < 1e-6
