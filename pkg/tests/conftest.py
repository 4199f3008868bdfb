import numpy as np
import pytest

from src.data.batches import open_dataset
from src.models.backbone import BackboneConfig
from src.training.stages import build_stage
from src.world.generate import DatasetRecipe, gen_dataset

TINY_BACKBONE = BackboneConfig(layers=1, width=32, heads=2, context=64, queries=2, instruction_cap=12,
                               reasoning_cap=8, patch=32)

TINY_RECIPE = DatasetRecipe(
    name="tests",
    max_steps=1000,
    retries=5,
    entries=[
        {"embodiment": "arm3", "task": "pick-place", "episodes": 2},
        {"embodiment": "arm3", "task": "sort-2", "episodes": 2},
        {"embodiment": "arm2", "task": "sort-2", "episodes": 2},
    ],
)


def tiny_stage(stage: int, **overrides):
    """Estágio com expert tiny e backbone mínimo, para treinos de poucos passos."""
    base = dict(expert="tiny", backbone=TINY_BACKBONE, batch=4, epochs=1, max_steps=3, prefetch=1)
    base.update(overrides)
    return build_stage(stage, **base)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Dataset pequeno gerado uma vez por sessão"""
    return gen_dataset(TINY_RECIPE, seed=11, out_dir=tmp_path_factory.mktemp("dataset"))


@pytest.fixture(scope="session")
def dataset(dataset_dir):
    return open_dataset(dataset_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
