import pytest

from resid_insert.config import (
    ABLATION_ERROR,
    ABLATION_STEPS,
    COMPARISON_STEP_CEILING,
    SEED_ENV,
    ConfigError,
    ExperimentConfig,
    ablation_config,
    comparison_config,
    dump_config,
    load_config,
    parse_config,
    preset,
    resolve_seed,
)


def test_default_preset_is_ram_slot():
    cfg = preset("default")
    assert cfg.scenario == "ram_slot"
    assert cfg.geometry.length == pytest.approx(0.120)
    assert cfg.agent.alpha == 0.5
    assert cfg.agent.k_p == (1.0, 1.0, 0.3, 0.0, 0.0, 0.0)


def test_ssd_preset_has_its_own_geometry():
    ssd = preset("ssd_slot")
    assert ssd.geometry.length < preset().geometry.length
    assert ssd.geometry.clearance > 0.0


def test_protocols_pin_steps_and_errors():
    a = ablation_config(ExperimentConfig(max_steps=77))
    assert a.max_steps == ABLATION_STEPS and a.initial_error_range == ABLATION_ERROR
    c = comparison_config(a)
    assert c.max_steps == COMPARISON_STEP_CEILING and c.initial_error_range == (0.0, 0.0)


def test_parse_sections_and_types():
    cfg = parse_config(
        """
        [experiment]
        trials = 12
        initial_error_range = 0.001, 0.002
        [agent]
        alpha = 0.3
        investigate = no
        [compliance]
        K_trans = 2500  # N/m
        [geometry]
        chamfer = 0.0004
        """
    )
    assert cfg.trials == 12
    assert cfg.initial_error_range == (0.001, 0.002)
    assert cfg.agent.alpha == 0.3 and cfg.agent.investigate is False
    assert cfg.compliance.K_trans == 2500.0
    assert cfg.geometry.chamfer == 0.0004


def test_scenario_key_swaps_geometry_before_refinement():
    cfg = parse_config("[experiment]\nscenario = ssd_slot\n[geometry]\ndepth = 0.003\n")
    assert cfg.scenario == "ssd_slot"
    assert cfg.geometry.length == preset("ssd_slot").geometry.length
    assert cfg.geometry.depth == 0.003


@pytest.mark.parametrize(
    "text",
    [
        "[experiment]\ntrials = many\n",
        "[experiment]\nbogus = 1\n",
        "[nowhere]\nx = 1\n",
        "[experiment]\ntrials = 0\n",
        "[agent]\nalpha = 2.0\n",
        "[geometry]\nram_width = 0.01\n",
        "[experiment]\nbaseline = baseline9\n",
        "no header line\n",
        "[experiment]\nscenario = floppy\n",
    ],
)
def test_bad_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_dump_parse_round_trip():
    cfg = parse_config("[experiment]\ntrials = 7\nseed = 3\n[agent]\ngamma = 0.2\n")
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(preset("ssd_slot"))) == preset("ssd_slot")


def test_load_from_file_and_missing_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[experiment]\ntrials = 5\n")
    assert load_config(str(p)).trials == 5
    assert load_config("ram_slot") == preset("ram_slot")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(None, 4) == 4
    monkeypatch.setenv(SEED_ENV, "11")
    assert resolve_seed(None, 4) == 11
    assert resolve_seed(2, 4) == 2
    monkeypatch.setenv(SEED_ENV, "eleven")
    with pytest.raises(ConfigError):
        resolve_seed(None, 4)


def test_without_noise_silences_everything():
    cfg = preset().without_noise()
    setup = cfg.task()
    assert not setup.compliance.noise_enabled
    assert setup.accurate_camera.pixel_noise_sigma == 0.0
    assert setup.rough_camera.depth_noise_sigma == 0.0
