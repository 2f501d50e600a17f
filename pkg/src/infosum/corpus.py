"""Ingestion of word-level NER-annotated documents into token-aligned examples.

Input is JSONL, one record per line:

    {"doc_words": [...], "summary_words": [...],
     "doc_entities": [{"label": "PERSON", "start": 0, "end": 2}, ...],
     "summary_entities": [...]}

Records with out-of-bounds or overlapping spans are rejected with a line
diagnostic rather than silently repaired. Entity spans survive only if their
label is on the allow-list, their word length is at most ten, and after
tokenization they fall fully inside the truncation window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

from infosum.bpe import MergeTable, encode_words

# the 20 entity types retained at ingest
DEFAULT_ENTITY_LABELS = frozenset(
    {
        "TITLE",
        "PERSON",
        "ORGANIZATION",
        "NATIONALITY",
        "RELIGION",
        "IDEOLOGY",
        "DEGREE",
        "DATE",
        "TIME",
        "DURATION",
        "LOCATION",
        "CITY",
        "STATE_OR_PROVINCE",
        "COUNTRY",
        "NUMBER",
        "MONEY",
        "PERCENT",
        "ORDINAL",
        "CAUSE_OF_DEATH",
        "CRIMINAL_CHARGE",
    }
)

DEFAULT_MAX_ENTITY_WORDS = 10

EXAMPLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EntitySpan:
    label: str
    word_start: int
    word_end: int  # exclusive

    def __post_init__(self):
        if self.word_end <= self.word_start:
            raise ValueError(f"empty entity span [{self.word_start}, {self.word_end})")


@dataclass(frozen=True)
class TokenEntitySpan:
    token_start: int
    token_end: int  # exclusive
    side: str  # "source" or "summary"

    @property
    def n(self) -> int:
        return self.token_end - self.token_start


@dataclass
class AnnotatedDocument:
    doc_words: list[str]
    summary_words: list[str]
    doc_entities: list[EntitySpan] = field(default_factory=list)
    summary_entities: list[EntitySpan] = field(default_factory=list)


@dataclass
class TrainingExample:
    """Token-level unit of training: aligned source/summary plus entity spans."""

    source: list[int]
    summary: list[int]  # targets, ends with eos when it fits the window
    teacher_inputs: list[int]  # [bos] + summary[:-1]
    source_entities: list[TokenEntitySpan] = field(default_factory=list)
    summary_entities: list[TokenEntitySpan] = field(default_factory=list)


class IngestError(Exception):
    pass


def _spans_valid(entities: list[EntitySpan], n_words: int) -> str | None:
    ordered = sorted(entities, key=lambda e: e.word_start)
    for ent in ordered:
        if ent.word_start < 0 or ent.word_end > n_words:
            return f"span [{ent.word_start}, {ent.word_end}) outside {n_words} words"
    for a, b in zip(ordered, ordered[1:]):
        if b.word_start < a.word_end:
            return f"overlapping spans at word {b.word_start}"
    return None


def _parse_record(obj: dict) -> AnnotatedDocument:
    doc_words = list(obj["doc_words"])
    summary_words = list(obj["summary_words"])
    doc_entities = [EntitySpan(e["label"], e["start"], e["end"]) for e in obj.get("doc_entities", [])]
    summary_entities = [
        EntitySpan(e["label"], e["start"], e["end"]) for e in obj.get("summary_entities", [])
    ]
    for ents, words, side in (
        (doc_entities, doc_words, "document"),
        (summary_entities, summary_words, "summary"),
    ):
        problem = _spans_valid(ents, len(words))
        if problem:
            raise IngestError(f"{side}: {problem}")
    return AnnotatedDocument(doc_words, summary_words, doc_entities, summary_entities)


def load_annotated(path, on_reject=None) -> list[AnnotatedDocument]:
    """Parse a JSONL annotation file; rejected lines go to `on_reject(lineno, msg)`."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                docs.append(_parse_record(json.loads(line)))
            except (KeyError, ValueError, IngestError) as exc:
                if on_reject is not None:
                    on_reject(lineno, str(exc))
    return docs


def filter_entities(
    doc: AnnotatedDocument,
    allowed: frozenset[str] = DEFAULT_ENTITY_LABELS,
    max_words: int = DEFAULT_MAX_ENTITY_WORDS,
) -> AnnotatedDocument:
    """Drop entities with a disallowed label or more than `max_words` words."""

    def keep(ents):
        return [
            e
            for e in ents
            if e.label in allowed and (e.word_end - e.word_start) <= max_words
        ]

    return AnnotatedDocument(
        doc_words=doc.doc_words,
        summary_words=doc.summary_words,
        doc_entities=keep(doc.doc_entities),
        summary_entities=keep(doc.summary_entities),
    )


def map_entity_spans(
    entities: list[EntitySpan],
    word_token_ranges: list[tuple[int, int]],
    window: int,
    side: str,
) -> list[TokenEntitySpan]:
    """Compose word spans with the word-token map; drop spans leaving the window.

    An entity partially outside the truncation window is dropped whole, never
    clipped, so its token sequence keeps its full conditional structure.
    """
    spans = []
    for ent in entities:
        token_start = word_token_ranges[ent.word_start][0]
        token_end = word_token_ranges[ent.word_end - 1][1]
        if token_end > window:
            continue
        spans.append(TokenEntitySpan(token_start, token_end, side))
    return spans


def build_example(
    doc: AnnotatedDocument,
    table: MergeTable,
    source_limit: int,
    summary_limit: int,
) -> TrainingExample | None:
    """Encode, truncate, and align one document; None if either side is empty."""
    if source_limit < 2 or summary_limit < 2:
        raise ValueError("length limits must be >= 2")
    src_ids, src_ranges = encode_words(doc.doc_words, table)
    sum_ids, sum_ranges = encode_words(doc.summary_words, table)
    if not src_ids or not sum_ids:
        return None

    source = src_ids[:source_limit]
    summary = sum_ids[: summary_limit - 1] + [table.eos_id]
    teacher = [table.bos_id] + summary[:-1]

    source_entities = map_entity_spans(doc.doc_entities, src_ranges, len(source), "source")
    # eos occupies the last target slot, so entity tokens must fit before it
    summary_entities = map_entity_spans(
        doc.summary_entities, sum_ranges, len(summary) - 1, "summary"
    )
    return TrainingExample(source, summary, teacher, source_entities, summary_entities)


# -- example file round-trip ------------------------------------------------------


def write_examples(fh, examples: list[TrainingExample]) -> None:
    fh.write(json.dumps({"format_version": EXAMPLE_FORMAT_VERSION}) + "\n")
    for ex in examples:
        fh.write(json.dumps(asdict(ex)) + "\n")


def save_examples(path, examples: list[TrainingExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_examples(fh, examples)


def load_examples(path) -> list[TrainingExample]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != EXAMPLE_FORMAT_VERSION:
            raise ValueError(f"unsupported example format: {header}")
        examples = []
        for line in fh:
            obj = json.loads(line)
            examples.append(
                TrainingExample(
                    source=obj["source"],
                    summary=obj["summary"],
                    teacher_inputs=obj["teacher_inputs"],
                    source_entities=[TokenEntitySpan(**e) for e in obj["source_entities"]],
                    summary_entities=[TokenEntitySpan(**e) for e in obj["summary_entities"]],
                )
            )
    return examples
