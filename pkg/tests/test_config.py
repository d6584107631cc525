"""Tests for run config loading, overrides, validation and hashing."""

from pathlib import Path

import pytest

from spinchain.config import (
    OUTPUT_ENV,
    ConfigError,
    RunConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    load_config,
    physics_hash,
    validate_config,
)


EXAMPLE = Path(__file__).resolve().parent.parent / "config" / "run.example.toml"


class TestLoad:

    def test_defaults(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        config = load_config()
        assert config.model.L == 8
        assert config.floquet.m0 == 1500
        assert config.output_dir == Path("results")
        validate_config(config)

    def test_example_file_matches_defaults(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        assert physics_hash(load_config(EXAMPLE)) == physics_hash(load_config())

    def test_partial_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('[model]\nL = 6\nkind = "pxp"\n\n[ramp]\nkind = "cosine-pxp"\n')
        config = load_config(path)
        assert config.model.L == 6
        assert config.ramp.kind == "cosine-pxp"
        assert config.ramp.tau == 10.0
        validate_config(config)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"model": {"length": 6}})

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            config_from_dict({"models": {}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_broken_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("[model\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert load_config().output_dir == tmp_path

    def test_wrong_type_in_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('[model]\nL = "8"\n')
        with pytest.raises(ConfigError):
            load_config(path)


class TestOverrides:

    def setup_method(self):
        self.config = config_from_dict({})

    def test_scalar_and_list(self):
        apply_overrides(self.config, ["model.L=10", "sweep.taus=[1, 10, 100]", "ramp.kind=cosine-degen"])
        assert self.config.model.L == 10
        assert self.config.sweep.taus == [1, 10, 100]
        assert self.config.ramp.kind == "cosine-degen"

    def test_top_level(self):
        apply_overrides(self.config, ["workers=3", "output_dir=out"])
        assert self.config.workers == 3
        assert self.config.output_dir == Path("out")

    @pytest.mark.parametrize("item", [
        "model.V0=abc",
        "workers=two",
        'floquet.h0="x"',
        "model.L=4.5",
        "model.L=true",
        "sweep.taus=5",
        "sweep.taus=[1, \"a\"]",
        "ramp.kind=3",
        "floquet.long_horizon=1",
        "output_dir=7",
    ])
    def test_wrong_type(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(self.config, [item])

    def test_ints_widen_to_float(self):
        apply_overrides(self.config, ["model.V0=2", "fpt.points=[[1, 2, 3]]"])
        assert isinstance(self.config.model.V0, float)
        assert self.config.fpt.points == [[1.0, 2.0, 3.0]]

    def test_optional_can_be_cleared(self):
        apply_overrides(self.config, ["floquet.p=none", "floquet.h0_over_omega=0.4", "floquet.long_horizon=true"])
        assert self.config.floquet.p is None
        assert self.config.floquet.h0_over_omega == 0.4
        assert self.config.floquet.long_horizon is True
        validate_config(self.config)

    @pytest.mark.parametrize("item", ["model.L", "nosuch.key=1", "model.size=3", "verbose=1", "a.b.c=1"])
    def test_rejected(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(self.config, [item])


class TestValidate:

    @pytest.mark.parametrize("override", [
        "model.L=2",
        "model.L=15",
        "model.kind=ising",
        "model.V0=0",
        "ramp.kind=linear-pxp",
        "ramp.end_fraction=0",
        "ramp.engine=euler",
        "sweep.taus=[10, 1]",
        "floquet.m0=2000",
        "floquet.theta=2.0",
        "floquet.average_mode=median",
        "fpt.points=[[0.1, 0.0, 1.0]]",
        "workers=0",
        "tolerances.parity=0",
        "fit.tau_min=10",
        "fit.tau_max=100",
        "floquet.horizon_factor=0",
        "floquet.p=none",
    ])
    def test_invalid(self, override):
        config = apply_overrides(config_from_dict({}), [override])
        with pytest.raises(ConfigError):
            validate_config(config)

    def test_raised_l_max(self):
        config = apply_overrides(config_from_dict({}), ["model.L=15", "model.l_max=16"])
        validate_config(config)


class TestHashing:

    def test_stable(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())
        assert len(config_hash(RunConfig())) == 16

    def test_int_and_float_hash_alike(self):
        assert config_hash({"V0": 1}) == config_hash({"V0": 1.0})

    def test_physics_hash_ignores_plumbing(self):
        a = config_from_dict({})
        b = apply_overrides(config_from_dict({}), ["workers=4", "output_dir=elsewhere",
                                                  'notify.url="https://example.org/push"'])
        assert physics_hash(a) == physics_hash(b)

    def test_physics_hash_tracks_parameters(self):
        a = config_from_dict({})
        b = apply_overrides(config_from_dict({}), ["ramp.tau=20"])
        assert physics_hash(a) != physics_hash(b)
