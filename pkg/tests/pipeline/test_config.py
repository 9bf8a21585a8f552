import numpy as np
import pytest
import yaml

from src.core.errors import ConfigError
from src.decoders.prototypes import DistanceMode
from src.encoder.params import init_encoder_params
from src.pipeline.config import RunConfig, WorkerSpec, config_from_dict, load_config


class TestLoadConfig:
    def test_defaults(self):
        config = config_from_dict({})
        assert config.split.ratios == (5, 1, 4)
        assert config.workers == (WorkerSpec(),)
        assert config.reserve_seconds == pytest.approx(7200 * 0.15)
        assert config.ensemble.train_episodes == 200
        assert config.ensemble.test_episodes == 100

    def test_default_worker_is_reference_encoder(self):
        spec = config_from_dict({}).workers[0]
        params = init_encoder_params(28 * 28, spec.hidden_dims, spec.embedding_dim, 10, np.random.default_rng(0))
        assert params.hidden_dims == [256, 128]
        assert params.embedding_dim == 64
        assert params.input_dim == 784

    def test_load_yaml(self, config_file, blob_file):
        config = load_config(config_file)
        assert config.dataset.path == str(blob_file)
        assert config.split.ratios == (2, 3, 3)
        assert [w.provider for w in config.workers] == ["mlp", "identity"]
        assert config.workers[0].hidden_dims == (16,)
        assert config.controller_config().max_rounds == 2

    def test_json_is_yaml(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"seed": 3, "split": {"ratios": "1:1:1"}}', encoding="utf8")
        config = load_config(path)
        assert config.seed == 3
        assert config.split.ratios == (1, 1, 1)

    def test_round_trip_through_echo(self, run_config):
        config = config_from_dict(run_config)
        assert config_from_dict(config.to_dict()) == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text("seed: [1, 2", encoding="utf8")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    @pytest.mark.parametrize("data, key", [
        ({"colour": "blue"}, "colour"),
        ({"decoder": {"steps": 3}}, "steps"),
        ({"workers": [{"provider": "cnn"}]}, r"workers\[0\].provider"),
        ({"split": {"ratios": "0:1:4"}}, "split.ratios"),
        ({"decoder": {"distance": "cosine"}}, "decoder.distance"),
        ({"decoder": {"mct_steps": 5000}}, "decoder.mct_steps"),
        ({"ensemble": {"fraction": 1.0}}, "ensemble.fraction"),
        ({"validation": {"way": 1}}, "validation.way"),
        ({"controller": {"poll_interval": 0.5}}, "controller.poll_interval"),
        ({"budget_seconds": 0}, "budget_seconds"),
        ({"workers": []}, "workers"),
    ])
    def test_errors_name_the_key(self, data, key):
        with pytest.raises(ConfigError, match=key):
            config_from_dict(data)

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError, match="expected a mapping"):
            config_from_dict({"decoder": [1, 2]})

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yml"
        path.write_text(yaml.safe_dump([1, 2]), encoding="utf8")
        with pytest.raises(ConfigError):
            load_config(path)


class TestOverrides:
    def test_section_and_scalar(self):
        config = RunConfig().with_overrides(**{"seed": 9, "decoder.distance": "euclidean", "evaluation.way": 3})
        assert config.seed == 9
        assert config.decoder.mct().distance_mode == DistanceMode.EUCLIDEAN
        assert config.evaluation.way == 3

    def test_none_is_ignored(self):
        config = RunConfig(seed=4).with_overrides(seed=None, **{"decoder.mct_steps": None})
        assert config.seed == 4
        assert config.decoder.mct_steps == 10

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigError, match="evaluation.way"):
            RunConfig().with_overrides(**{"evaluation.way": 1})

    def test_evaluation_seed_falls_back_to_master(self):
        assert RunConfig(seed=5).evaluation_seed == 5
        assert RunConfig(seed=5).with_overrides(**{"evaluation.seed": 11}).evaluation_seed == 11
