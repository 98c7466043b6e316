import os

import pytest

from rmpmab.config import load_profile, parse_config, profile_dir, to_text
from rmpmab.errors import ConfigError

PROFILES = sorted(f[:-4] for f in os.listdir(profile_dir()) if f.endswith(".cfg"))

MINIMAL = """
[experiment]
arms = 3
processes = 5
horizon = 10
trials = 2
seed = 1

[policy.w]
id = whittle
gamma = 0.5
"""


class TestParse:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        e = cfg.experiment
        assert (e.n_arms, e.n_processes, e.horizon, e.trials, e.seed) == (3, 5, 10, 2, 1)
        assert e.policies[0].label == "w" and e.policies[0].gamma == 0.5

    def test_trials_zero(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("trials = 2", "trials = 0"))
        assert info.value.key == "experiment.trials"
        assert info.value.line == 6

    def test_unknown_key_named_with_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("seed = 1", "seed = 1\nsead = 2"))
        assert "sead" in str(info.value) and info.value.line == 8

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL + "\n[plots]\nwidth = 3\n")

    def test_bad_integer(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("arms = 3", "arms = three"))
        assert info.value.key == "experiment.arms"

    def test_unknown_policy_id(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("id = whittle", "id = bandito"))
        assert info.value.key == "policy.w.id"

    def test_certify_gamma_one(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[certify]\ngammas = 0.5, 1.0\n")
        assert "gamma" in str(info.value)

    def test_certify_ranges(self):
        cfg = parse_config("[certify]\nj = 0..3, 7\nm = 2\n")
        assert tuple(cfg.certify.js) == (0, 1, 2, 3, 7)
        assert tuple(cfg.certify.ms) == (2,)

    def test_syntax_error(self):
        with pytest.raises(ConfigError):
            parse_config("[experiment\narms = 3\n")

    def test_seed_override_changes_digest(self):
        cfg = parse_config(MINIMAL)
        other = cfg.with_seed(99)
        assert other.experiment.seed == 99 and other.digest != cfg.digest


class TestRoundTrip:
    @pytest.mark.parametrize("name", PROFILES)
    def test_profiles_are_fixed_points(self, name):
        cfg = load_profile(name)
        text = to_text(cfg)
        again = parse_config(text)
        assert to_text(again) == text
        assert again.digest == cfg.digest

    def test_profiles_shipped(self):
        for name in ("desk", "heterogeneous-paper", "homogeneous-paper", "vanishing-paper", "continuous-paper",
                     "certify-default", "replay-synthetic"):
            assert name in PROFILES

    def test_heterogeneous_profile_has_five_policies(self):
        assert len(load_profile("heterogeneous-paper").experiment.policies) == 5

    def test_missing_profile(self):
        with pytest.raises(ConfigError, match="available"):
            load_profile("nope")

    def test_profile_dir_override(self, tmp_path, monkeypatch):
        (tmp_path / "mine.cfg").write_text(MINIMAL)
        monkeypatch.setenv("RMPMAB_PROFILE_DIR", str(tmp_path))
        assert load_profile("mine").experiment.n_arms == 3
