"""Scikit-learn style front end so the pipeline composes with that ecosystem.

``TransformerSummarizer.fit`` ingests annotated documents (dataclasses or
raw JSONL-style dicts), trains the tokenizer and the model with the
composite objective, and ``predict`` decodes summaries for new documents.
Hyperparameters live in ``__init__`` and round-trip through
``get_params``/``set_params``, so ``sklearn.base.clone`` works.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from infosum import bpe, corpus
from infosum.evalsuite import rouge_n, rouge_lsum
from infosum.model import ModelConfig, BeamSettings, init_params, beam_search
from infosum.trainer import TrainConfig, train


def _as_document(item) -> corpus.AnnotatedDocument:
    if isinstance(item, corpus.AnnotatedDocument):
        return item
    if isinstance(item, dict):
        return corpus.AnnotatedDocument(
            doc_words=list(item["doc_words"]),
            summary_words=list(item.get("summary_words", [])),
            doc_entities=[corpus.EntitySpan(e["label"], e["start"], e["end"])
                          for e in item.get("doc_entities", [])],
            summary_entities=[corpus.EntitySpan(e["label"], e["start"], e["end"])
                              for e in item.get("summary_entities", [])],
        )
    raise TypeError(f"expected AnnotatedDocument or dict, got {type(item).__name__}")


def _check_documents(X, need_summaries: bool) -> list[corpus.AnnotatedDocument]:
    if not hasattr(X, "__len__") or len(X) == 0:
        raise ValueError("X must be a non-empty sequence of annotated documents")
    docs = [_as_document(item) for item in X]
    if need_summaries and any(not d.summary_words for d in docs):
        raise ValueError("every training document needs summary_words")
    return docs


class TransformerSummarizer(BaseEstimator):
    """Miniature encoder-decoder summarizer with a fit/predict surface."""

    def __init__(
        self,
        merge_count=200,
        d_model=64,
        layers=2,
        heads=4,
        ff_width=128,
        dropout=0.1,
        max_source=128,
        max_summary=48,
        epochs=10,
        learning_rate=5e-5,
        weight_decay=1e-6,
        batch_size=8,
        alpha_ot=1.0,
        alpha_anig=1.0,
        alpha_je=1.0,
        patience=3,
        beams=4,
        min_length=1,
        length_penalty=1.0,
        seed=0,
    ):
        self.merge_count = merge_count
        self.d_model = d_model
        self.layers = layers
        self.heads = heads
        self.ff_width = ff_width
        self.dropout = dropout
        self.max_source = max_source
        self.max_summary = max_summary
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.alpha_ot = alpha_ot
        self.alpha_anig = alpha_anig
        self.alpha_je = alpha_je
        self.patience = patience
        self.beams = beams
        self.min_length = min_length
        self.length_penalty = length_penalty
        self.seed = seed

    def fit(self, X, y=None):
        docs = _check_documents(X, need_summaries=True)
        docs = [corpus.filter_entities(d) for d in docs]
        word_corpus = [d.doc_words for d in docs] + [d.summary_words for d in docs]
        self.table_ = bpe.train_merges(word_corpus, self.merge_count)

        examples = []
        for doc in docs:
            ex = corpus.build_example(doc, self.table_, self.max_source, self.max_summary)
            if ex is not None:
                examples.append(ex)
        if not examples:
            raise ValueError("no usable training examples after encoding")

        self.model_config_ = ModelConfig(
            vocab_size=self.table_.size,
            d_model=self.d_model,
            layers=self.layers,
            heads=self.heads,
            ff_width=self.ff_width,
            dropout=self.dropout,
            max_source=self.max_source,
            max_summary=self.max_summary,
            seed=self.seed,
        )
        train_config = TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            alpha_ot=self.alpha_ot,
            alpha_anig=self.alpha_anig,
            alpha_je=self.alpha_je,
            patience=self.patience,
            seed=self.seed,
            val_every=0,
        )
        self.params_, self.history_ = train(
            examples, [], self.model_config_, train_config, init_params(self.model_config_), self.table_
        )
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X) -> list[str]:
        """One decoded summary string per input document."""
        self._require_fitted()
        docs = _check_documents(X, need_summaries=False)
        settings = BeamSettings(
            max_length=self.max_summary,
            min_length=self.min_length,
            beams=self.beams,
            length_penalty=self.length_penalty,
        )
        out = []
        for doc in docs:
            ids, _ = bpe.encode_words(doc.doc_words, self.table_)
            ids = ids[: self.max_source]
            out_ids = beam_search(
                ids, self.params_, self.model_config_, settings,
                self.table_.bos_id, self.table_.eos_id,
            )
            out.append(bpe.decode(out_ids, self.table_))
        return out

    def score(self, X, y=None) -> float:
        """Mean ROUGE-1/2/Lsum F-score of predictions against reference summaries."""
        self._require_fitted()
        docs = _check_documents(X, need_summaries=True)
        preds = self.predict(docs)
        total = 0.0
        for doc, pred in zip(docs, preds):
            ref = " ".join(doc.summary_words)
            total += (
                rouge_n(pred, ref, 1).f1 + rouge_n(pred, ref, 2).f1 + rouge_lsum(pred, ref).f1
            ) / 3.0
        return total / len(docs)
