import pytest
import yaml

from src.data.loaders import write_embedding_dataset
from src.data.synthetic import make_blob_embeddings


@pytest.fixture
def blob_file(tmp_path):
    """8 well-separated blobs written as an EMB1 file"""
    return write_embedding_dataset(make_blob_embeddings(8, 40, seed=3), tmp_path / "blobs.emb1")


@pytest.fixture
def run_config(blob_file):
    return {
        "dataset": {"path": str(blob_file), "kind": "embedding"},
        "split": {"ratios": [2, 3, 3]},
        "workers": [
            {"provider": "mlp", "hidden_dims": [16], "embedding_dim": 8, "learning_rate": 0.05, "alpha": 0.0,
             "way": 2, "shot": 4, "epochs_per_round": 1, "batches_per_epoch": 3},
            {"provider": "identity"},
        ],
        "validation": {"episodes": 20, "way": 3, "shot": 1, "query": 5},
        "decoder": {"mct_steps": 5},
        "ensemble": {"train_episodes": 40, "test_episodes": 30, "query": 5, "iterations": 200},
        "evaluation": {"episodes": 200, "way": 3, "shot": 1, "query": 19},
        "controller": {"max_rounds": 2},
        "seed": 7,
        "budget_seconds": 3600,
    }


@pytest.fixture
def config_file(tmp_path, run_config):
    path = tmp_path / "run.yml"
    path.write_text(yaml.safe_dump(run_config), encoding="utf8")
    return path
