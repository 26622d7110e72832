import json
import math
from pathlib import Path

import pytest

from megsim.scenario import (
    ScenarioConfig,
    ScenarioError,
    config_from_dict,
    load_scenario,
    validate_config,
)

REPRO = Path(__file__).resolve().parents[1] / "scenarios" / "reproduction.json"


def write_scenario(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_minimal_config_gets_documented_defaults(tmp_path):
    cfg = load_scenario(write_scenario(tmp_path, {"protocols": ["CIAG"]}))
    assert cfg.latent_dim == 64
    assert cfg.height == 64 and cfg.width == 64
    assert cfg.pool_factor == 8
    assert cfg.snr_db == -20.0
    assert cfg.trials == 100
    assert any(e.startswith("trials=") for e in cfg.applied_defaults)
    assert any(e.startswith("snr_db=") for e in cfg.applied_defaults)


def test_pool_factor_must_divide_dimensions(tmp_path):
    doc = {"protocols": ["CIAG"], "pipeline": {"pool_factor": 3, "height": 64, "width": 64}}
    with pytest.raises(ScenarioError, match="pool_factor"):
        load_scenario(write_scenario(tmp_path, doc))


def test_reproduction_scenario_payload_sizes():
    cfg = load_scenario(REPRO)
    assert cfg.resolved_image_bits == 1_300_000
    assert cfg.resolved_seed_bits == 28_000
    assert cfg.text_bits == 1_000
    assert cfg.resolved_sketch_bits == 81_250  # image / k^2 with k = 4
    assert cfg.snr_db == -20.0


def test_trials_zero_rejected():
    with pytest.raises(ScenarioError, match="trials"):
        config_from_dict({"protocols": ["CIAG"], "trials": 0})


def test_multi_es_requires_servers():
    with pytest.raises(ScenarioError, match="es_count"):
        config_from_dict({"protocols": ["UIDG"]})
    cfg = config_from_dict({"protocols": ["UIDG"], "es_count": 2})
    assert cfg.es_count == 2


def test_latent_dim_bounded_by_pixels():
    with pytest.raises(ScenarioError, match="latent_dim"):
        config_from_dict({"protocols": ["CIAG"],
                          "pipeline": {"latent_dim": 300, "height": 16, "width": 16}})


def test_nonpositive_rates_rejected():
    with pytest.raises(ScenarioError, match="bandwidth_hz"):
        config_from_dict({"protocols": ["CIAG"], "channel": {"bandwidth_hz": 0}})
    with pytest.raises(ScenarioError, match="ue_compute_rate"):
        config_from_dict({"protocols": ["CIAG"], "devices": {"ue_compute_rate": -1}})


def test_figure_protocol_aliases_accepted():
    cfg = config_from_dict({"protocols": ["BIUG", "UIBG"]})
    assert cfg.protocols == ("EIUG", "UIEG")


def test_unknown_keys_named_in_error():
    with pytest.raises(ScenarioError, match="warp_speed"):
        config_from_dict({"protocols": ["CIAG"], "warp_speed": 9})
    with pytest.raises(ScenarioError, match="channel"):
        config_from_dict({"protocols": ["CIAG"], "channel": {"snr": -20}})


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "protocols": [CIAG]\n}', encoding="utf-8")
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "nope.json")


def test_fixed_index_policy_parse():
    cfg = config_from_dict({"protocols": ["UIDG"], "es_count": 3,
                            "selection_policy": {"fixed_index": 1}})
    assert cfg.selection_policy == ("fixed_index", 1)
    with pytest.raises(ScenarioError, match="selection_policy"):
        config_from_dict({"protocols": ["CIAG"], "selection_policy": "loudest"})


def test_per_message_requires_reference(tmp_path):
    doc = {"protocols": ["CIAG"], "channel": {"energy_mode": "per_message"}}
    with pytest.raises(ScenarioError, match="reference_symbol_count"):
        load_scenario(write_scenario(tmp_path, doc))


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("MEGSIM_MASTER_SEED", "4242")
    monkeypatch.setenv("MEGSIM_SNR_DB", "3.5")
    monkeypatch.setenv("MEGSIM_TRIALS", "7")
    cfg = load_scenario(write_scenario(tmp_path, {"protocols": ["CIAG"], "trials": 2}))
    assert cfg.master_seed == 4242
    assert cfg.snr_db == 3.5
    assert cfg.trials == 7


def test_env_override_parse_error(tmp_path, monkeypatch):
    monkeypatch.setenv("MEGSIM_TRIALS", "many")
    with pytest.raises(ScenarioError, match="MEGSIM_TRIALS"):
        load_scenario(write_scenario(tmp_path, {"protocols": ["CIAG"]}))


def test_background_device_must_exist():
    with pytest.raises(ScenarioError, match="background.device"):
        config_from_dict({"protocols": ["CIAG"],
                          "background": {"device": "ES9", "rate_hz": 1.0}})


def test_derived_payload_sizes_follow_dimensions():
    cfg = config_from_dict({"protocols": ["CIAG"],
                            "pipeline": {"height": 32, "width": 32, "latent_dim": 16,
                                         "pool_factor": 4}})
    assert cfg.resolved_image_bits == 32 * 32 * 8
    assert cfg.resolved_seed_bits == 16 * 32
    assert cfg.resolved_sketch_bits == (32 * 32 * 8) // 16


def test_validate_config_direct_construction():
    cfg = ScenarioConfig(protocols=("CIAG",), trials=1)
    assert validate_config(cfg) is cfg
    cfg = ScenarioConfig(protocols=("CIAG",), trials=1, snr_db=math.inf)
    validate_config(cfg)  # infinite SNR is a valid noise-free setting
