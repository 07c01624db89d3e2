import numpy as np
import pytest

from aeroservo.config import ConfigError, RunConfig, load_config, parse_config, replace_section, serialize


def test_empty_text_gives_defaults():
    c = parse_config("")
    assert c == RunConfig()
    assert (c.servo.lambda_r, c.servo.lambda_p) == (0.25, 0.27)
    assert (c.servo.delta_r, c.servo.delta_t) == (0.075, 0.040)
    assert c.matching.theta_c == 0.45
    assert (c.matching.n, c.matching.N) == (512, 2048)


def test_comments_and_blank_lines():
    c = parse_config("# header\n\nsim.dt = 0.05   # coarse\nsim.tracking = tracker\n")
    assert c.sim.dt == 0.05 and c.sim.tracking == "tracker"


def test_invariant_violation_names_key_and_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("sim.dt = 0.01\nservo.lambda_r = -1\n")
    assert exc.value.key == "servo.lambda_r" and exc.value.line == 2
    assert "servo.lambda_r" in str(exc.value) and "line 2" in str(exc.value)


@pytest.mark.parametrize("text,key", [
    ("servo.bogus = 1", "servo.bogus"),
    ("nosuch.key = 1", "nosuch.key"),
    ("sim.max_steps = many", "sim.max_steps"),
    ("sim.initial_offset = 1, 2", "sim.initial_offset"),
    ("sim.stop_on_converge = maybe", "sim.stop_on_converge"),
    ("noise.drop_probability = 2", "noise.drop_probability"),
])
def test_bad_values_rejected(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == key and exc.value.line == 1


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("sim.dt = 0.01\nsim.dt = 0.02\n")
    with pytest.raises(ConfigError) as exc:
        parse_config("sim.dt 0.01")
    assert exc.value.line == 1


def test_round_trip_defaults_and_changed():
    c = RunConfig()
    assert parse_config(serialize(c)) == c
    c2 = replace_section(replace_section(c, "sim", dt=0.05, initial_offset=(0.3, -0.1, 0.05)),
                         "noise", pose_rot_sigma=0.013, seed=4)
    again = parse_config(serialize(c2))
    assert again == c2 and again != c
    assert again.sim.initial_offset == (0.3, -0.1, 0.05)


def test_round_trip_arm_section():
    text = serialize(RunConfig()).replace("arm.link_lengths = ", "arm.link_lengths = 0.11, 0.12, 0.13, 0.14 #")
    c = parse_config(text)
    np.testing.assert_allclose(c.arm.link_lengths, [0.11, 0.12, 0.13, 0.14])
    assert parse_config(serialize(c)) == c


def test_shipped_presets_load():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    ideal = load_config(root / "ideal.cfg")
    fast = load_config(root / "rate20hz.cfg")
    assert ideal.sim.dt == 0.01 and fast.sim.dt == 0.05


def test_controller_uses_settings():
    c = replace_section(RunConfig(), "servo", lambda_r=0.5, guard="either")
    ctl = c.controller()
    assert ctl.gains.lambda_r == 0.5 and ctl.guard == "either"
