import numpy as np
import pytest

from tripleset.matching_loss import GoldTriple, GoldTripleSet
from tripleset.model import ModelConfig, PredictionSet, SetPredictionModel


def random_prediction_set(rng, m, t, l, sharp=1.0):
    def dist(*shape):
        z = np.exp(sharp * rng.normal(size=shape))
        return z / z.sum(-1, keepdims=True)
    return PredictionSet.from_arrays(dist(m, t), dist(m, l), dist(m, l), dist(m, l), dist(m, l))


def random_gold_set(rng, m, t, l, n=None):
    null = t - 1
    n = int(rng.integers(0, m + 1)) if n is None else n
    triples = []
    for _ in range(n):
        s0, o0 = rng.integers(0, l, 2)
        s1, o1 = rng.integers(s0, l), rng.integers(o0, l)
        triples.append(GoldTriple(int(rng.integers(0, null)), int(s0), int(s1), int(o0), int(o1)))
    triples += [GoldTriple(null)] * (m - n)
    return GoldTripleSet(tuple(triples), n=n, null_relation=null)


@pytest.fixture
def tiny_config():
    return ModelConfig(vocab_size=30, t=4, d=16, l_max=16, m=4, encoder_layers=1, decoder_layers=2,
                       heads=2, dropout=0.1)


@pytest.fixture
def tiny_model(tiny_config):
    return SetPredictionModel(tiny_config, seed=3)


# filled by the acceptance tests, shown after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
