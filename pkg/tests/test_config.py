import pytest

from stopgo.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults_roundtrip():
    cfg = RunConfig()
    assert parse_config(cfg.to_ini()) == cfg


def test_every_section_emitted():
    text = RunConfig().to_ini()
    for section in ("run", "sim", "krauss", "reward", "ddpg", "rolling", "fuel", "congestion"):
        assert f"[{section}]" in text


def test_partial_file_keeps_defaults():
    cfg = parse_config("[reward]\nv_ept = 5\n[ddpg]\nhidden = 32, 16\nstate_scale = 50,10,3,10,3\n")
    assert cfg.reward.v_ept == 5.0
    assert cfg.ddpg.hidden == (32, 16)
    assert cfg.ddpg.state_scale == (50.0, 10.0, 3.0, 10.0, 3.0)
    assert cfg.sim == RunConfig().sim


def test_types_parsed():
    cfg = parse_config("[reward]\nliteral_speeddiff = yes\n[sim]\ninitial_speed = 4.5\n"
                       "[rolling]\nend = 500\nconventional = off\n")
    assert cfg.reward.literal_speeddiff is True
    assert cfg.sim.initial_speed == 4.5
    assert cfg.rolling.end == 500 and cfg.rolling.conventional is False


def test_seed_flows_to_sections():
    cfg = parse_config("[run]\nseed = 42\n")
    assert cfg.sim_config().seed == 42 and cfg.ddpg_config().seed == 42


@pytest.mark.parametrize("text, match", [
    ("[reward]\nv_eptt = 5\n", "v_eptt"),
    ("[rewards]\nv_ept = 5\n", "rewards"),
    ("[sim]\nseed = 3\n", "seed"),
    ("[ddpg]\nbatch_size = many\n", "batch_size"),
    ("[reward]\nv_ept = -1\n", "reward"),
    ("[reward]\nliteral_speeddiff = maybe\n", "literal_speeddiff"),
    ("[sim]\nego_index = 3\n", "sim"),
    ("v_ept = 5\n", "section"),
])
def test_rejects_bad_input(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_with_values_overrides():
    cfg = RunConfig().with_values({"reward.v_ept": "7.5", "run.seed": "9"})
    assert cfg.reward.v_ept == 7.5 and cfg.seed == 9
    with pytest.raises(ConfigError):
        RunConfig().with_values({"v_ept": "1"})


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "nope.ini")
