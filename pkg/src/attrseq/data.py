"""Attributed-sequence records, vocabularies, encoding and JSONL ingestion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, LengthError, ParseError, SchemaError, VocabError
from .numerics import vector


@dataclass(frozen=True)
class Vocabulary:
    items: tuple[str, ...]

    def __post_init__(self):
        if len(self.items) == 0:
            raise ConfigError("a vocabulary needs at least one item")
        if len(set(self.items)) != len(self.items):
            raise ConfigError("vocabulary items must be unique")
        object.__setattr__(self, "_index", {item: k for k, item in enumerate(self.items)})

    @property
    def r(self) -> int:
        return len(self.items)

    def index(self, item: str) -> int:
        try:
            return self._index[item]
        except KeyError:
            raise VocabError(f"unknown item {item!r}") from None

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class AttributeField:
    key: str
    kind: str  # "numeric" | "categorical"
    low: float = 0.0
    high: float = 0.0
    categories: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return 1 if self.kind == "numeric" else len(self.categories)

    def encode(self, value) -> list[float]:
        if self.kind == "numeric":
            span = self.high - self.low
            return [0.0 if span == 0 else (float(value) - self.low) / span]
        # categories not seen at fit time map to the all-zero block
        return [1.0 if value == c else 0.0 for c in self.categories]


@dataclass(frozen=True)
class AttributeSchema:
    """How raw attribute dictionaries become numeric vectors.

    Categorical values are one-hot expanded (category order = first
    occurrence); numeric values are min-max scaled with the fitted range.
    """

    fields: tuple[AttributeField, ...]

    @property
    def u(self) -> int:
        return sum(f.width for f in self.fields)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(f.key for f in self.fields)

    def encode(self, attrs: dict) -> np.ndarray:
        if set(attrs) != set(self.keys):
            raise SchemaError(f"attribute keys {sorted(attrs)} do not match schema {sorted(self.keys)}")
        out: list[float] = []
        for f in self.fields:
            value = attrs[f.key]
            if (f.kind == "numeric") != _is_number(value):
                raise SchemaError(f"attribute {f.key!r} expects a {f.kind} value, got {value!r}")
            out.extend(f.encode(value))
        return vector(out)

    @classmethod
    def fit(cls, rows: Sequence[dict]) -> "AttributeSchema":
        if not rows:
            return cls(())
        keys = list(rows[0])
        fields_ = []
        for key in keys:
            values = [row[key] for row in rows]
            kinds = {_is_number(v) for v in values}
            if len(kinds) > 1:
                raise SchemaError(f"attribute {key!r} mixes numeric and categorical values")
            if kinds == {True}:
                fields_.append(AttributeField(key, "numeric", float(min(values)), float(max(values))))
            else:
                fields_.append(AttributeField(key, "categorical", categories=tuple(dict.fromkeys(values))))
        return cls(tuple(fields_))

    def to_json(self) -> list:
        out = []
        for f in self.fields:
            if f.kind == "numeric":
                out.append({"key": f.key, "kind": "numeric", "min": f.low, "max": f.high})
            else:
                out.append({"key": f.key, "kind": "categorical", "categories": list(f.categories)})
        return out

    @classmethod
    def from_json(cls, data: list) -> "AttributeSchema":
        fields_ = []
        for f in data:
            if f["kind"] == "numeric":
                fields_.append(AttributeField(f["key"], "numeric", float(f["min"]), float(f["max"])))
            elif f["kind"] == "categorical":
                fields_.append(AttributeField(f["key"], "categorical", categories=tuple(f["categories"])))
            else:
                raise SchemaError(f"unknown attribute kind {f['kind']!r}")
        return cls(tuple(fields_))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class AttributedSequence:
    id: str
    attributes: np.ndarray
    sequence: tuple[int, ...]
    label: str | None = None

    def __len__(self) -> int:
        return len(self.sequence)


@dataclass(frozen=True)
class FeedbackTriplet:
    left_id: str
    right_id: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"feedback label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    vocab: Vocabulary
    u: int
    records: tuple[AttributedSequence, ...]
    schema: AttributeSchema | None = None
    _by_id: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for rec in self.records:
            if rec.attributes.shape != (self.u,):
                raise SchemaError(f"record {rec.id} has {rec.attributes.shape[0]} attributes, expected {self.u}")
            if any(not 0 <= k < self.vocab.r for k in rec.sequence):
                raise VocabError(f"record {rec.id} has an item index outside the vocabulary")
            if rec.id in by_id:
                raise SchemaError(f"duplicate record id {rec.id!r}")
            by_id[rec.id] = rec
        object.__setattr__(self, "_by_id", by_id)

    @property
    def t_max(self) -> int:
        return max((len(rec) for rec in self.records), default=0)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, record_id: str) -> AttributedSequence:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise KeyError(f"unknown record id {record_id!r}") from None

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def classes(self) -> list[str]:
        """Class labels in first-occurrence order."""
        return list(dict.fromkeys(rec.label for rec in self.records if rec.label is not None))

    def subset(self, records: Iterable[AttributedSequence]) -> "Dataset":
        return Dataset(self.vocab, self.u, tuple(records), self.schema)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and self.u == other.u
            and self.schema == other.schema
            and len(self.records) == len(other.records)
            and all(
                a.id == b.id and a.sequence == b.sequence and a.label == b.label
                and np.array_equal(a.attributes, b.attributes)
                for a, b in zip(self.records, other.records)
            )
        )

    __hash__ = None


@dataclass(frozen=True)
class EncodedSequence:
    onehots: np.ndarray  # t_max x r
    mask: np.ndarray  # bool, t_max
    true_len: int

    def steps(self) -> list[np.ndarray]:
        return [self.onehots[t] for t in range(self.true_len)]


def encode_one_hot(seq: Sequence[int], vocab: Vocabulary | int, t_max: int) -> EncodedSequence:
    r = vocab.r if isinstance(vocab, Vocabulary) else int(vocab)
    if len(seq) > t_max:
        raise LengthError(f"sequence of length {len(seq)} exceeds t_max={t_max}")
    onehots = np.zeros((t_max, r))
    for t, k in enumerate(seq):
        if not 0 <= k < r:
            raise VocabError(f"item index {k} outside vocabulary of size {r}")
        onehots[t, k] = 1.0
    mask = np.zeros(t_max, dtype=bool)
    mask[: len(seq)] = True
    return EncodedSequence(onehots, mask, len(seq))


def decode_one_hot(enc: EncodedSequence) -> list[int]:
    return [int(np.argmax(enc.onehots[t])) for t in range(enc.true_len)]


def one_hot_steps(seq: Sequence[int], r: int) -> list[np.ndarray]:
    """Unpadded one-hot rows, the form the networks consume."""
    return encode_one_hot(seq, r, len(seq)).steps()


# ---------------------------------------------------------------- JSONL I/O


def _parse_lines(path: Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            rows.append((lineno, obj))
    return rows


def load_jsonl(path, schema: AttributeSchema | None = None, vocab: Vocabulary | None = None) -> Dataset:
    """Read a dataset file.

    Without ``schema``/``vocab`` both are fitted on the file (vocabulary in
    first-occurrence order). Passing them re-encodes the file exactly as a
    previously fitted dataset; unknown items then raise ``VocabError``.
    """
    rows = _parse_lines(Path(path))
    raw = []
    for lineno, obj in rows:
        rid, attrs, seq, label = obj.get("id"), obj.get("attributes", {}), obj.get("sequence"), obj.get("label")
        if not isinstance(rid, str):
            raise ParseError("'id' must be a string", lineno)
        if not isinstance(attrs, dict):
            raise ParseError("'attributes' must be an object", lineno)
        if not isinstance(seq, list) or not all(isinstance(s, str) for s in seq):
            raise ParseError("'sequence' must be a list of strings", lineno)
        if label is not None and not isinstance(label, str):
            raise ParseError("'label' must be a string", lineno)
        for key, value in attrs.items():
            if not (isinstance(value, str) or _is_number(value)) or (_is_number(value) and not math.isfinite(value)):
                raise ParseError(f"attribute {key!r} must be a string or a finite number", lineno)
        raw.append((lineno, rid, attrs, seq, label))

    if raw:
        keys = set(raw[0][2])
        for lineno, _, attrs, _, _ in raw:
            if set(attrs) != keys:
                raise SchemaError(f"line {lineno}: attribute keys {sorted(attrs)} differ from {sorted(keys)}")
    if schema is None:
        schema = AttributeSchema.fit([attrs for _, _, attrs, _, _ in raw])
    if vocab is None:
        items = dict.fromkeys(item for _, _, _, seq, _ in raw for item in seq)
        vocab = Vocabulary(tuple(items) or ("<none>",))

    records = []
    for lineno, rid, attrs, seq, label in raw:
        try:
            x = schema.encode(attrs)
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        records.append(AttributedSequence(rid, x, tuple(vocab.index(s) for s in seq), label))
    return Dataset(vocab, schema.u, tuple(records), schema)


def dataset_to_jsonl(dataset: Dataset, path, attribute_rows: Sequence[dict] | None = None) -> None:
    """Write records as JSONL; attributes default to ``a0..a{u-1}`` numeric keys."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, rec in enumerate(dataset.records):
            attrs = attribute_rows[k] if attribute_rows is not None else {
                f"a{j}": float(v) for j, v in enumerate(rec.attributes)
            }
            obj = {"id": rec.id, "attributes": attrs, "sequence": [dataset.vocab.items[i] for i in rec.sequence]}
            if rec.label is not None:
                obj["label"] = rec.label
            fh.write(json.dumps(obj, sort_keys=False) + "\n")


def load_feedback(path, dataset: Dataset | None = None) -> list[FeedbackTriplet]:
    out = []
    for lineno, obj in _parse_lines(Path(path)):
        left, right, label = obj.get("left"), obj.get("right"), obj.get("label")
        if not isinstance(left, str) or not isinstance(right, str):
            raise ParseError("'left' and 'right' must be record ids", lineno)
        if label not in (0, 1) or isinstance(label, bool):
            raise ParseError("'label' must be 0 or 1", lineno)
        if dataset is not None and (left not in dataset or right not in dataset):
            raise SchemaError(f"line {lineno}: feedback refers to an unknown record id")
        out.append(FeedbackTriplet(left, right, label))
    return out


def write_feedback(triplets: Iterable[FeedbackTriplet], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in triplets:
            fh.write(json.dumps({"left": tr.left_id, "right": tr.right_id, "label": tr.label}) + "\n")


def schema_sidecar(dataset: Dataset) -> dict:
    return {
        "vocabulary": list(dataset.vocab.items),
        "attributes": dataset.schema.to_json() if dataset.schema is not None else None,
        "u": dataset.u,
    }


def from_sidecar(data: dict) -> tuple[Vocabulary, AttributeSchema | None]:
    schema = AttributeSchema.from_json(data["attributes"]) if data.get("attributes") is not None else None
    return Vocabulary(tuple(data["vocabulary"])), schema
