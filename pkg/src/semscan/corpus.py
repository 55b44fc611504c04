"""Corpus ingestion: records, tokenization, vocabulary, location geometry."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from datetime import date as Date
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Every non-alphanumeric character acts as a separator; underscore included.
_WORD = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class RawRecord:
    """One input line: a dated, located piece of raw text."""

    id: str
    date: Date
    location_id: str
    text: str
    label: str | None = None


@dataclass(frozen=True)
class Document:
    """Encoded record: vocabulary indices plus dense day/location indices."""

    id: str
    day_index: int
    location_index: int
    tokens: tuple[int, ...]
    label: str | None = None


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split on every non-alphanumeric character.

    No stemming, no stop-word removal; empty input yields an empty list.
    """
    return _WORD.findall(text.lower())


class Vocabulary:
    """Bijective term <-> dense index map."""

    __slots__ = ("terms", "index")

    def __init__(self, terms: Iterable[str]):
        self.terms: tuple[str, ...] = tuple(terms)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise CorpusError("vocabulary contains duplicate terms")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to indices, silently dropping out-of-vocabulary tokens."""
        index = self.index
        return [index[t] for t in tokens if t in index]

    def decode(self, ids: Iterable[int]) -> list[str]:
        terms = self.terms
        return [terms[i] for i in ids]


def build_vocabulary(token_seqs: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Collect terms occurring at least ``min_count`` times, indexed lexicographically."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for seq in token_seqs:
        counts.update(seq)
    kept = sorted(t for t, c in counts.items() if c >= min_count)
    if not kept:
        raise CorpusError("vocabulary is empty after applying min_count=%d" % min_count)
    return Vocabulary(kept)


class LocationTable:
    """Monitored locations with planar coordinates and nearest-neighbor orderings."""

    def __init__(self, ids: Iterable[str], coords):
        self.ids: tuple[str, ...] = tuple(ids)
        self.coords = np.asarray(coords, dtype=np.float64)
        if len(self.ids) == 0:
            raise CorpusError("location table is empty")
        if self.coords.shape != (len(self.ids), 2):
            raise CorpusError("coordinates must be an (N, 2) array")
        if not np.all(np.isfinite(self.coords)):
            raise CorpusError("location coordinates must be finite")
        self.index: dict[str, int] = {loc: i for i, loc in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise CorpusError("duplicate location ids")
        self._neighbor_order: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_csv(cls, path) -> "LocationTable":
        ids: list[str] = []
        coords: list[tuple[float, float]] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) < {"id", "x", "y"}:
                raise CorpusError(f"{path}: location table must have header id,x,y")
            for rownum, row in enumerate(reader, start=2):
                try:
                    ids.append(row["id"])
                    coords.append((float(row["x"]), float(row["y"])))
                except (TypeError, ValueError, KeyError) as exc:
                    raise CorpusError(f"{path}: row {rownum}: {exc}") from exc
        return cls(ids, coords)

    def neighbor_order(self) -> np.ndarray:
        """Full ascending-distance ordering from each location.

        Row i is a permutation of 0..N-1 starting with i itself; distance
        ties are broken by ascending location index.
        """
        if self._neighbor_order is None:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            # Self sorts first even when another location shares its coordinates.
            np.fill_diagonal(d2, -1.0)
            self._neighbor_order = np.argsort(d2, axis=1, kind="stable").astype(np.int32)
        return self._neighbor_order


def neighbor_order(location_table: LocationTable) -> np.ndarray:
    """Per-location sorted neighbor lists (see ``LocationTable.neighbor_order``)."""
    return location_table.neighbor_order()


def read_records(path) -> list[RawRecord]:
    """Parse a JSON-lines records file; raises ``CorpusError`` naming the bad line."""
    records: list[RawRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}: line {lineno}: expected a JSON object")
            try:
                rid = obj["id"]
                date_str = obj["date"]
                location = obj["location"]
                text = obj["text"]
            except KeyError as exc:
                raise CorpusError(f"{path}: line {lineno}: missing key {exc}") from exc
            label = obj.get("label")
            if not all(isinstance(v, str) for v in (rid, date_str, location, text)):
                raise CorpusError(f"{path}: line {lineno}: id/date/location/text must be strings")
            if label is not None and not isinstance(label, str):
                raise CorpusError(f"{path}: line {lineno}: label must be a string")
            try:
                day = Date.fromisoformat(date_str)
            except ValueError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid date {date_str!r}") from exc
            records.append(RawRecord(rid, day, location, text, label))
    return records


def encode_records(
    records: Iterable[RawRecord],
    vocabulary: Vocabulary,
    locations: LocationTable,
    epoch: Date,
) -> tuple[list[Document], int, int]:
    """Resolve records against the vocabulary and location table.

    Returns (documents, rejected_record_count, dropped_token_count). Records
    with an unknown location are skipped and tallied; out-of-vocabulary
    tokens are dropped and tallied.
    """
    documents: list[Document] = []
    rejected = 0
    dropped = 0
    loc_index = locations.index
    for rec in records:
        loc = loc_index.get(rec.location_id)
        if loc is None:
            rejected += 1
            continue
        day = (rec.date - epoch).days
        if day < 0:
            raise CorpusError(f"record {rec.id}: date {rec.date} precedes corpus epoch {epoch}")
        raw = tokenize(rec.text)
        kept = vocabulary.encode(raw)
        dropped += len(raw) - len(kept)
        documents.append(Document(rec.id, day, loc, tuple(kept), rec.label))
    if rejected:
        logger.warning("skipped %d records with unknown location ids", rejected)
    if dropped:
        logger.info("dropped %d out-of-vocabulary tokens", dropped)
    return documents, rejected, dropped


@dataclass(frozen=True)
class Corpus:
    """Loaded corpus: encoded documents plus the structures they resolve against."""

    documents: tuple[Document, ...]
    vocabulary: Vocabulary
    locations: LocationTable
    epoch: Date
    rejected: int
    dropped_tokens: int


def load_corpus(
    records_path,
    location_table: LocationTable,
    *,
    min_count: int = 1,
    background_end: Date | None = None,
) -> Corpus:
    """Load records, build the vocabulary, and encode every record.

    The vocabulary is built from records dated strictly before
    ``background_end`` (the background partition); with ``background_end``
    omitted, all records contribute.
    """
    records = read_records(records_path)
    if not records:
        raise CorpusError(f"{records_path}: no records")
    epoch = min(r.date for r in records)
    if background_end is None:
        vocab_records = records
    else:
        vocab_records = [r for r in records if r.date < background_end]
        if not vocab_records:
            raise CorpusError("no records before background_end; vocabulary would be empty")
    vocabulary = build_vocabulary((tokenize(r.text) for r in vocab_records), min_count)
    documents, rejected, dropped = encode_records(records, vocabulary, location_table, epoch)
    return Corpus(tuple(documents), vocabulary, location_table, epoch, rejected, dropped)
