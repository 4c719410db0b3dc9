"""Tests for configuration loading and validation."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from dfssd.config import (
    AppConfig,
    AttackConfig,
    BenchConfig,
    BenchManifest,
    DeepFaultConfig,
    NetlistConfig,
    NetlistSidecar,
    ReachConfig,
    SchemeSpec,
    SolverConfig,
    SsdConfig,
    load_config,
    load_manifest,
)
from dfssd.exceptions import ConfigError


class TestNetlistConfig:
    def test_defaults(self):
        config = NetlistConfig()
        assert config.key_prefix == "keyinput"
        assert config.keep_mux is False

    def test_empty_prefix_rejected(self):
        with pytest.raises(ValidationError, match="key_prefix"):
            NetlistConfig(key_prefix="")

    def test_frozen(self):
        config = NetlistConfig()
        with pytest.raises(ValidationError):
            config.key_prefix = "k"


class TestSolverConfig:
    def test_defaults(self):
        config = SolverConfig()
        assert config.backend == "cdcl"
        assert config.conflict_budget is None

    def test_unknown_backend(self):
        with pytest.raises(ValidationError):
            SolverConfig(backend="minisat")

    def test_budget_positive(self):
        with pytest.raises(ValidationError, match="conflict_budget"):
            SolverConfig(conflict_budget=0)


class TestReachConfig:
    def test_defaults(self):
        config = ReachConfig()
        assert config.explicit_ff_limit == 24
        assert config.max_input_bits == 16
        assert config.max_states == 1 << 20

    def test_ff_limit_range(self):
        with pytest.raises(ValidationError, match="explicit_ff_limit"):
            ReachConfig(explicit_ff_limit=31)


class TestDeepFaultConfig:
    def test_defaults(self):
        config = DeepFaultConfig()
        assert config.width == 2
        assert config.tracer == "clock"
        assert config.order == "ssd-first"

    def test_width_range(self):
        with pytest.raises(ValidationError, match="width"):
            DeepFaultConfig(width=0)
        with pytest.raises(ValidationError, match="width"):
            DeepFaultConfig(width=17)

    def test_trigger_validated(self):
        assert DeepFaultConfig(trigger=("010", "100")).trigger == ("010", "100")
        with pytest.raises(ValidationError, match="trigger"):
            DeepFaultConfig(trigger=("01", "100"))
        with pytest.raises(ValidationError, match="trigger"):
            DeepFaultConfig(trigger=("0a", "10"))

    def test_hide_modes(self):
        assert DeepFaultConfig(hide="nonoccur").hide == "nonoccur"
        with pytest.raises(ValidationError):
            DeepFaultConfig(hide="layout")


class TestAttackConfig:
    def test_defaults(self):
        config = AttackConfig()
        assert config.initial_boundary == 1
        assert config.boundary_step == 8
        assert config.umc_mode == "auto"
        assert config.explicit_key_bits == 16

    def test_boundary_positive(self):
        with pytest.raises(ValidationError, match="boundary"):
            AttackConfig(boundary_step=0)

    def test_time_budget_positive(self):
        with pytest.raises(ValidationError, match="time_budget_sec"):
            AttackConfig(time_budget_sec=0)


class TestBenchConfig:
    def test_resolve_paths(self):
        config = BenchConfig(output_dir="~/x/bench")
        resolved = config.resolve_output_dir()
        assert isinstance(resolved, Path)
        assert "~" not in str(resolved)

    def test_workers_positive(self):
        with pytest.raises(ValidationError, match="workers"):
            BenchConfig(workers=0)


class TestSchemeSpec:
    @pytest.mark.parametrize(
        "spec, label",
        [
            ({"ssd": 1}, "SSD"),
            ({"ssd": 3}, "SSD3"),
            ({"df": 3}, "DF3"),
            ({"df": 4, "tracer": "lfsr"}, "DF4-lfsr"),
            ({"ssd": 1, "df": 5}, "SSD+DF5"),
        ],
    )
    def test_label(self, spec, label):
        assert SchemeSpec(**spec).label == label

    def test_empty_scheme_rejected(self):
        with pytest.raises(ValidationError):
            SchemeSpec()

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            SchemeSpec(ssd=-1, df=2)


class TestNetlistSidecar:
    def test_bits_only(self):
        assert NetlistSidecar(ff_init={"S0": 1}).ff_init == {"S0": 1}
        with pytest.raises(ValidationError, match="ff_init"):
            NetlistSidecar(ff_init={"S0": 2})


class TestAppConfig:
    def test_defaults(self):
        config = AppConfig()
        assert isinstance(config.ssd, SsdConfig)
        assert isinstance(config.attack, AttackConfig)

    def test_frozen(self):
        config = AppConfig()
        with pytest.raises(ValidationError):
            config.ssd = SsdConfig()


class TestLoadConfig:
    def test_load_yaml(self, tmp_path):
        config_file = tmp_path / "settings.yaml"
        config_file.write_text(
            "ssd:\n  key_granularity: edge\nattack:\n  boundary_step: 2\n"
        )
        config = load_config(config_file)
        assert config.ssd.key_granularity == "edge"
        assert config.attack.boundary_step == 2
        assert config.reach.explicit_ff_limit == 24

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/settings.yaml")

    def test_invalid_yaml(self, tmp_path):
        config_file = tmp_path / "bad.yaml"
        config_file.write_text("{{invalid yaml")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_config(config_file)

    def test_empty_yaml(self, tmp_path):
        config_file = tmp_path / "empty.yaml"
        config_file.write_text("")
        assert isinstance(load_config(config_file), AppConfig)

    def test_validation_error_wrapped(self, tmp_path):
        config_file = tmp_path / "bad.yaml"
        config_file.write_text("deepfault:\n  width: 0\n")
        with pytest.raises(ConfigError, match="validation failed"):
            load_config(config_file)

    def test_example_config_loads(self):
        example = Path(__file__).resolve().parent.parent / "config" / "settings.example.yaml"
        assert load_config(example) == AppConfig()


class TestLoadManifest:
    def test_relative_circuits_resolved(self, tmp_path):
        (tmp_path / "c.bench").write_text("INPUT(a)\nOUTPUT(a)\n")
        manifest_file = tmp_path / "bench.yaml"
        manifest_file.write_text(
            "circuits: [c.bench]\nschemes:\n  - {ssd: 1}\n  - {df: 3}\nseed: 7\n"
        )
        manifest = load_manifest(manifest_file)
        assert manifest.circuits == [str(tmp_path / "c.bench")]
        assert [s.label for s in manifest.schemes] == ["SSD", "DF3"]
        assert manifest.seed == 7

    def test_empty_manifest(self, tmp_path):
        manifest_file = tmp_path / "bench.yaml"
        manifest_file.write_text("")
        assert load_manifest(manifest_file) == BenchManifest()

    def test_bad_scheme(self, tmp_path):
        manifest_file = tmp_path / "bench.yaml"
        manifest_file.write_text("schemes:\n  - {}\n")
        with pytest.raises(ConfigError, match="Manifest validation failed"):
            load_manifest(manifest_file)

    def test_example_manifest(self):
        example = Path(__file__).resolve().parent.parent / "config" / "bench.example.yaml"
        manifest = load_manifest(example)
        assert len(manifest.circuits) == 6
        assert all(Path(c).exists() for c in manifest.circuits)
