import numpy as np
import pytest

from daylight_net import dataset, synthgen


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Two-day synthetic corpus at 32px, with measurement noise, shared by
    integration-style tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    config = synthgen.SynthConfig(seed=11, image_size=32)
    synthgen.generate_corpus(2, config, root)
    return root, config


@pytest.fixture(scope="session")
def tiny_samples(tiny_corpus):
    root, _ = tiny_corpus
    return dataset.load_corpus(root / "samples.csv", root / "images", root / "mask.json")


@pytest.fixture(scope="session")
def tiny_split(tiny_samples):
    from datetime import date

    return dataset.split(tiny_samples, seed=21, holdout_day=date(2024, 3, 5))


@pytest.fixture(scope="session")
def tiny_assembled(tiny_corpus, tiny_samples, tiny_split):
    from daylight_net import features

    root, _ = tiny_corpus
    polygons = features.load_mask_config(root / "mask.json")
    return features.assemble_corpus(
        tiny_samples, polygons, image_size=32, train_indices=tiny_split.train
    )
