import os

import numpy as np
import pytest

from infosum import bpe, corpus
from infosum.corpus import TokenEntitySpan, TrainingExample
from infosum.model import ModelConfig, init_params

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
FIXTURE_CORPUS = os.path.join(DATA_DIR, "fixture_corpus.txt")
OVERFIT_JSONL = os.path.join(DATA_DIR, "overfit.jsonl")


@pytest.fixture(scope="session")
def fixture_words() -> list[list[str]]:
    with open(FIXTURE_CORPUS, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


@pytest.fixture(scope="session")
def fixture_table(fixture_words) -> bpe.MergeTable:
    return bpe.train_merges(fixture_words, 50)


@pytest.fixture(scope="session")
def overfit_setup():
    """Tokenizer + examples + model/train settings that memorize the toy corpus."""
    docs = [corpus.filter_entities(d) for d in corpus.load_annotated(OVERFIT_JSONL)]
    word_corpus = [d.doc_words for d in docs] + [d.summary_words for d in docs]
    table = bpe.train_merges(word_corpus, 400)
    examples = [corpus.build_example(d, table, 64, 24) for d in docs]
    config = ModelConfig(
        vocab_size=table.size,
        d_model=64,
        layers=1,
        heads=4,
        ff_width=128,
        dropout=0.0,
        max_source=64,
        max_summary=24,
        seed=0,
    )
    return docs, table, examples, config


def tiny_config(vocab_size=31, seed=0, **overrides) -> ModelConfig:
    defaults = dict(
        vocab_size=vocab_size,
        d_model=16,
        layers=1,
        heads=2,
        ff_width=32,
        dropout=0.0,
        max_source=16,
        max_summary=12,
        seed=seed,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def tiny_example(config: ModelConfig, seed=0, source_len=8, summary_len=5) -> TrainingExample:
    rng = np.random.default_rng(seed)
    source = rng.integers(4, config.vocab_size, size=source_len).tolist()
    summary = rng.integers(4, config.vocab_size, size=summary_len).tolist() + [2]
    return TrainingExample(
        source=source,
        summary=summary,
        teacher_inputs=[1] + summary[:-1],
        source_entities=[TokenEntitySpan(1, 3, "source"), TokenEntitySpan(5, 6, "source")],
        summary_entities=[TokenEntitySpan(0, 2, "summary"), TokenEntitySpan(3, 4, "summary")],
    )


def tiny_model(seed=0, **overrides):
    config = tiny_config(seed=seed, **overrides)
    return config, init_params(config)
