import pytest

from psyduck.config import (
    Config,
    DEFAULT_CONFIG_TEXT,
    apply_env_overrides,
    build_runtime,
    parse_config,
    parse_grid,
    serialize_config,
)
from psyduck.errors import ConfigError


def test_defaults_parse_and_build():
    cfg = parse_config(DEFAULT_CONFIG_TEXT)
    assert cfg == Config()
    runtime = build_runtime(cfg)
    assert runtime.sched.T == 50
    assert runtime.params.d == 2 and runtime.params.r == 2
    assert runtime.params.cells.n_cells == 4128
    assert runtime.codec.kind == "identity"


def test_serialize_parse_is_idempotent():
    texts = [
        DEFAULT_CONFIG_TEXT,
        "schedule.t = 20\nschedule.beta_start = 0.001\nschedule.beta_end = 0.1\nprotocol.d = 3\n",
        "protocol.cell_shape = 2\nsample.shape = 64\ncodec.spec = quantize_noise:8:0.01\n",
    ]
    for text in texts:
        once = serialize_config(parse_config(text))
        assert serialize_config(parse_config(once)) == once


def test_comments_and_blanks_ignored():
    cfg = parse_config("# header\n\nprotocol.d = 5  # inline\n")
    assert cfg.d == 5


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("protocol.splines = 4\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config("protocol.d = soon\n")


def test_explicit_schedule_overrides_preset():
    cfg = parse_config("schedule.t = 12\nschedule.beta_start = 0.01\nschedule.beta_end = 0.2\n")
    assert cfg.schedule_preset is None
    runtime = build_runtime(cfg)
    assert runtime.sched.T == 12


def test_env_overrides():
    cfg = apply_env_overrides(
        Config(),
        {
            "PSYDUCK_PROTOCOL_D": "7",
            "PSYDUCK_SCHEDULE_PRESET": "linear-1000",
            "PSYDUCK_PROTOCOL_FINAL_STEP_KEY_MODE": "reference",
            "UNRELATED": "1",
        },
    )
    assert cfg.d == 7
    assert cfg.schedule_preset == "linear-1000"
    assert cfg.final_step_key_mode == "reference"


def test_env_override_unknown_key_rejected():
    with pytest.raises(ConfigError):
        apply_env_overrides(Config(), {"PSYDUCK_PROTOCOL_SPLINES": "4"})


def test_build_rejects_bad_preset():
    with pytest.raises(ConfigError):
        build_runtime(Config(schedule_preset="cosine-9000"))


def test_build_rejects_bridge_without_client():
    with pytest.raises(ConfigError):
        build_runtime(Config(backend="bridge:somecmd"))


def test_build_rejects_invalid_geometry():
    with pytest.raises(ConfigError):
        build_runtime(Config(sample_shape=(10,), cell_shape=(3,)))


def test_grid_parse_product():
    grid, trials = parse_grid("d = 1, 2, 3\nr = 2\ncodec = quantize:8, quantize:6\ntrials = 10\n")
    assert trials == 10
    points = grid.points()
    assert len(points) == 6
    assert points[0].d == 1 and points[0].codec == "quantize:8"


def test_grid_empty_rejected():
    with pytest.raises(ConfigError):
        parse_grid("# nothing here\n")


def test_grid_unknown_axis_rejected():
    with pytest.raises(ConfigError):
        parse_grid("flavor = vanilla\n")
