"""Shared small-scale fixtures: a tiny synthetic corpus and untrained models."""
import numpy as np
import pytest

from monolog import datagen
from monolog.classifiers import ModelConfig
from monolog.training import new_model

SMALL = dict(embed_dim=6, hidden=(8, 6, 4, 3), minmax_blocks=3, minmax_neurons=4,
             vocab_size=300, n_groups=12)

VARIANTS = {
    "linear": ModelConfig(classifier="linear", **SMALL),
    "deep": ModelConfig(classifier="deep", **SMALL),
    "minmax": ModelConfig(classifier="minmax", **SMALL),
    "baseline": ModelConfig(classifier="deep", monotone=False, **SMALL),
}


@pytest.fixture(scope="session")
def small_corpus():
    return datagen.generate(datagen.GenConfig(seed=7, n_train=60, n_test=40, log_length=(5, 25)))


def random_biases(model, rng):
    for name, w in model.params.items():
        if name.endswith(".b"):
            model.params[name] = rng.normal(0.0, 0.5, size=w.shape)


def random_model(corpus, config, seed=0):
    model = new_model([s.log for s in corpus.train], corpus.alphabet, config)
    rng = np.random.default_rng(seed)
    model.init_params(rng)
    random_biases(model, rng)
    return model


@pytest.fixture(scope="session")
def random_models(small_corpus):
    return {k: random_model(small_corpus, c, seed=i) for i, (k, c) in enumerate(VARIANTS.items())}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
