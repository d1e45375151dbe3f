import pytest

from photonstats import config as config_module
from photonstats.config import (
    CONFIG_DIR,
    config_from_dict,
    config_to_dict,
    environment,
    load_config,
    resolve_config_path,
)
from photonstats.errors import ConfigError


@pytest.mark.parametrize("preset", config_module.PRESETS)
def test_presets_load(preset):
    config = load_config(preset)
    assert config.name == preset
    assert config.excitation.rep_period_ps == 400_000


def test_dr1_preset():
    config = load_config("dr1")
    assert not config.is_reference
    physics = config.emitter_model().physics
    assert physics.tau_x == pytest.approx(65.0)
    assert physics.tau_trion == pytest.approx(11.708, abs=1e-3)
    assert config.window_policy().manual
    assert config.correlation_config().align_ps == 400_000


def test_poisson_preset_is_reference():
    config = load_config("poisson")
    assert config.is_reference
    assert config.correlation_config().align_ps == 0


def test_unknown_key_names_the_path():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"acquisition": {"durationn": 3.0}})
    assert info.value.key == "acquisition.durationn"


def test_zero_duration():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"acquisition": {"duration_s": 0}})
    assert info.value.key == "acquisition.duration_s"


@pytest.mark.parametrize("data, key", [
    ({"acquisition": {"duration_s": "long"}}, "acquisition.duration_s"),
    ({"analysis": {"correlator": {"align_to_pulses": "yes"}}}, "analysis.correlator.align_to_pulses"),
    ({"analysis": {"pulsed": {"plateau_ps": 4000}}}, "analysis.pulsed.plateau_ps"),
    ({"detector": "fast"}, "detector"),
    ({"excitation": {"rep_period_ps": 400_000.7}}, "excitation.rep_period_ps"),
    ({"acquisition": {"seed": True}}, "acquisition.seed"),
])
def test_bad_values(data, key):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.key == key


def test_whole_floats_are_accepted_as_integers():
    config = config_from_dict({"excitation": {"rep_period_ps": 4.0e5}, "acquisition": {"seed": 3.0}})
    assert config.excitation.rep_period_ps == 400_000
    assert isinstance(config.excitation.rep_period_ps, int)
    assert config.acquisition.seed == 3


def test_yields_style_emitter():
    config = config_from_dict({"emitter": {"tau_x": 65.0, "q_trion": 0.36, "q_biexciton": 0.106}})
    physics = config.emitter_model().physics
    assert physics.q_trion == pytest.approx(0.36)
    assert physics.q_biexciton == pytest.approx(0.106)


@pytest.mark.parametrize("emitter", [{}, {"tau_x": 65.0, "q_trion": 0.36}])
def test_incomplete_emitter(emitter):
    with pytest.raises(ConfigError):
        config_from_dict({"emitter": emitter}).emitter_model()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yml")
    with pytest.raises(ConfigError):
        load_config("dr9")


def test_invalid_yaml(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("emitter: [tau_x: 65\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_file_name_becomes_run_name(tmp_path):
    path = tmp_path / "short-run.yml"
    path.write_text("acquisition:\n  duration_s: 0.5\n")
    config = load_config(path)
    assert config.name == "short-run"
    assert config.acquisition.duration_s == 0.5


def test_resolve_config_path(tmp_path):
    assert resolve_config_path("dr2") == CONFIG_DIR / "dr2.yml"
    assert resolve_config_path(str(tmp_path / "run.yml")) == tmp_path / "run.yml"


def test_dict_round_trip():
    config = load_config("dr2")
    assert config_from_dict(config_to_dict(config)) == config


def test_environment_threads(monkeypatch):
    monkeypatch.setenv("PHOTONSTATS_THREADS", "4")
    assert environment().threads == 4
    monkeypatch.setenv("PHOTONSTATS_THREADS", "0")
    assert environment().threads == 1
    monkeypatch.setenv("PHOTONSTATS_THREADS", "many")
    with pytest.raises(ConfigError):
        environment()


def test_environment_defaults(monkeypatch):
    for name in ("PHOTONSTATS_THREADS", "TEMPORAL_ADDRESS", "PHOTONSTATS_TASK_QUEUE"):
        monkeypatch.delenv(name, raising=False)
    env = environment()
    assert env.threads == 1
    assert env.temporal_address == "localhost:7233"
    assert env.task_queue == "photon-analysis-task-queue"
