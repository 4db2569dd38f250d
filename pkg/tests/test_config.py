"""Config files, defaults, and flag overrides."""

import pytest

from docexperts.config import (
    BenchSettings,
    EngineConfig,
    ProviderSettings,
    build_config,
    config_overrides,
    load_config,
)
from docexperts.embedding import (
    KIND_DETERMINISTIC,
    KIND_REMOTE,
    DeterministicLocalProvider,
    RemoteHttpProvider,
)
from docexperts.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "engine.toml"
    path.write_text(text)
    return path


class TestDefaults:
    def test_empty_config_is_all_defaults(self):
        cfg = build_config()
        assert cfg.seed == 0
        assert cfg.chunking.window_size == 300
        assert cfg.provider.kind == KIND_DETERMINISTIC
        assert cfg.provider.dim == 256
        assert cfg.clustering.min_cluster_size == 5
        assert cfg.router.m == 2
        assert cfg.router.p == 5
        assert cfg.baseline.k == 10
        assert cfg.bench.runs == 3

    def test_engine_config_direct_construction(self):
        cfg = EngineConfig()
        assert cfg.router.m == 2
        assert cfg.clustering.seed == 0


class TestFileValues:
    def test_sections_land_in_their_dataclasses(self, tmp_path):
        path = write(
            tmp_path,
            """
            seed = 9
            [chunking]
            window_size = 120
            overlap_fraction = 0.2
            [provider]
            dim = 32
            batch_size = 8
            [clustering]
            min_cluster_size = 7
            max_cluster_size = 50
            [router]
            m = 3
            p = 2
            context_token_budget = 400
            [baseline]
            k = 6
            reranker = "lexical-overlap"
            [bench]
            runs = 2
            warmup = 1
            """,
        )
        cfg = load_config(path)
        assert cfg.seed == 9
        assert cfg.chunking.window_size == 120
        assert cfg.chunking.overlap_fraction == 0.2
        assert cfg.provider.dim == 32
        assert cfg.provider.batch_size == 8
        assert cfg.clustering.min_cluster_size == 7
        assert cfg.clustering.max_cluster_size == 50
        assert cfg.router.m == 3
        assert cfg.router.context_token_budget == 400
        assert cfg.baseline.k == 6
        assert cfg.baseline.reranker == "lexical-overlap"
        assert cfg.bench.runs == 2

    def test_seed_flows_into_clustering_and_provider(self, tmp_path):
        cfg = load_config(write(tmp_path, "seed = 5\n"))
        assert cfg.clustering.seed == 5
        provider = cfg.build_provider()
        assert isinstance(provider, DeterministicLocalProvider)
        assert provider.spec.model_name == "hashed-bow-5"

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_invalid_toml_is_config_error(self, tmp_path):
        path = write(tmp_path, "seed = [unclosed\n")
        with pytest.raises(ConfigError, match="invalid TOML"):
            load_config(path)


class TestOverrides:
    def test_flag_values_beat_file_values(self, tmp_path):
        path = write(tmp_path, "[router]\nm = 3\np = 7\n")
        cfg = load_config(path, overrides={"router": {"m": 4, "p": None}})
        assert cfg.router.m == 4  # flag wins
        assert cfg.router.p == 7  # absent flag leaves file value

    def test_seed_override_beats_file(self, tmp_path):
        path = write(tmp_path, "seed = 3\n")
        cfg = load_config(path, overrides={"seed": 11})
        assert cfg.seed == 11
        assert cfg.clustering.seed == 11

    def test_overrides_shaping_helper(self):
        out = config_overrides(seed=4, router={"m": 1}, chunking=None)
        assert out == {"seed": 4, "router": {"m": 1}}
        assert config_overrides() == {}


class TestRejection:
    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError, match="'threads'"):
            load_config(write(tmp_path, "threads = 4\n"))

    def test_unknown_section_key_names_section(self, tmp_path):
        with pytest.raises(ConfigError, match=r"'q' in \[router\]"):
            load_config(write(tmp_path, "[router]\nq = 2\n"))

    def test_clustering_seed_key_rejected(self, tmp_path):
        # the only seed is the top-level one
        with pytest.raises(ConfigError, match=r"'seed' in \[clustering\]"):
            load_config(write(tmp_path, "[clustering]\nseed = 3\n"))

    def test_section_must_be_table(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[router\] must be a table"):
            load_config(write(tmp_path, "router = 3\n"))

    def test_bad_value_reports_section(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[chunking\]"):
            load_config(write(tmp_path, "[chunking]\nwindow_size = 0\n"))

    def test_bad_value_type_reports_section(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[chunking\]"):
            load_config(write(tmp_path, "[chunking]\nwindow_size = \"wide\"\n"))

    def test_section_validation_still_applies(self, tmp_path):
        with pytest.raises(ConfigError, match="m must be >= 1"):
            load_config(write(tmp_path, "[router]\nm = 0\n"))

    @pytest.mark.parametrize("literal", ['"7"', "true", "1.5"])
    def test_seed_must_be_integer(self, tmp_path, literal):
        with pytest.raises(ConfigError, match="seed"):
            load_config(write(tmp_path, f"seed = {literal}\n"))


class TestProviderSettings:
    def test_remote_requires_endpoint(self):
        with pytest.raises(ConfigError, match="endpoint"):
            ProviderSettings(kind=KIND_REMOTE)

    def test_remote_builds_http_provider(self):
        settings = ProviderSettings(
            kind=KIND_REMOTE, dim=16, endpoint="http://embed.local/v1", model_name="m1"
        )
        provider = settings.build(seed=0)
        assert isinstance(provider, RemoteHttpProvider)
        assert provider.spec.endpoint == "http://embed.local/v1"
        assert provider.spec.dim == 16

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            ProviderSettings(kind="planted")

    @pytest.mark.parametrize("kwargs", [{"dim": 0}, {"batch_size": 0}])
    def test_bounds(self, kwargs):
        with pytest.raises(ConfigError):
            ProviderSettings(**kwargs)


class TestBenchSettings:
    def test_bounds(self):
        with pytest.raises(ConfigError):
            BenchSettings(runs=0)
        with pytest.raises(ConfigError):
            BenchSettings(warmup=-1)
        assert BenchSettings(runs=1, warmup=0).runs == 1
