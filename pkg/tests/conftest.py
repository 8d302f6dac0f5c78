import pytest

from harpbd.data import AugmentConfig, SynthConfig, WindowConfig, fold_for, synth_generate
from harpbd.graph import SensorSet, graph_for, load_skeleton
from harpbd.models.base import TrainConfig
from harpbd.nn import ModelSpec

TINY_MODEL = {"gc_kernels": 4, "lstm_layers": 1, "lstm_hidden": 4, "dropout": 0.0}


@pytest.fixture(scope="session")
def tiny_trials():
    config = SynthConfig(
        subjects=3,
        healthy_subjects=1,
        sequence_seconds=2,
        bout_seconds=0.5,
        rater_noise=0.0,
    )
    return synth_generate(config, seed=11)


@pytest.fixture(scope="session")
def small_graph():
    skeleton = load_skeleton()
    return graph_for(SensorSet.preset("symmetric7", skeleton), skeleton)


@pytest.fixture(scope="session")
def tiny_fold(tiny_trials):
    return fold_for(
        tiny_trials,
        "C01",
        WindowConfig(length=20, stride=10),
        AugmentConfig(enabled=False),
        seed=11,
    )


@pytest.fixture
def har_spec():
    return ModelSpec.har(**TINY_MODEL)


@pytest.fixture
def pbd_spec():
    return ModelSpec.pbd(gc_layers=1, **TINY_MODEL)


@pytest.fixture
def train_config():
    return TrainConfig(epochs=2, batch_size=8, seed=3)
