import pytest

from bridgekit.config import (
    ConfigError,
    ExperimentConfig,
    format_config,
    parse_config,
)


class TestParsing:
    def test_round_trip(self):
        exp = ExperimentConfig(T=16, gamma=1.5, task="shapes16", net="tiny_unet",
                               no_soft_prior=True, lr=3e-4, seed=99)
        assert parse_config(format_config(exp)) == exp

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_config("frobnicate = 3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("T = 4\nT = 8\n")

    def test_comments_and_blanks(self):
        exp = parse_config("# a comment\n\nT = 12  # trailing\ngamma = 0.5\n")
        assert exp.T == 12 and exp.gamma == 0.5

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="boolean"):
            parse_config("no_soft_prior = maybe\n")

    def test_bad_int(self):
        with pytest.raises(ConfigError, match="T"):
            parse_config("T = twelve\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("just some text\n")


class TestDerivedConfigs:
    def test_effective_variant_ablation(self):
        assert ExperimentConfig(no_soft_prior=True).effective_variant() == "pinned"
        assert ExperimentConfig().effective_variant() == "soft"

    def test_sampler_options_one_shot_ablation(self):
        opts = ExperimentConfig(no_self_consistency=True, r_max=6).sampler_options()
        assert opts.r_max == 1

    def test_total_steps_from_epochs(self):
        exp = ExperimentConfig(steps=0, epochs=3, batch_size=10)
        assert exp.total_steps(25) == 3 * 3
        with pytest.raises(ConfigError):
            ExperimentConfig(steps=0, epochs=0).total_steps(25)
