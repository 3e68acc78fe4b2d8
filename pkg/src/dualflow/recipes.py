"""Reference training runs shared by the tests, benchmarks and examples."""
from . import datasets as ds
from .flow_model import AttentionField, DenseField, TrainConfig, train

MOONS_COND = 1


def moons_data(n=20000, seed=3):
    return ds.sample_2d(ds.two_moons(), n, seed=seed)


def train_moons(seed=7, steps=4000):
    pairs = ds.make_pairs(moons_data(), MOONS_COND, seed=4)
    field = DenseField(2, seed=seed)
    return train(field, pairs, TrainConfig(steps=steps, batch_size=256, seed=seed,
                                           cond_dropout=0.1))


def train_glyphs(seed=3, steps=2000):
    x1, cond = ds.glyph_samples(4096, seed=1)
    pairs = ds.make_pairs(x1, cond, seed=2)
    field = AttentionField(seed=seed)
    return train(field, pairs, TrainConfig(steps=steps, batch_size=64, seed=5))
