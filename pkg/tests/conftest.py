"""Shared builders for the small synthetic worlds the tests run on."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from semscan.corpus import Document, LocationTable, RawRecord, Vocabulary


def make_docs(token_lists, day=0, location=0):
    """Wrap raw token-index lists as Documents on one day and location."""
    return [
        Document(id=f"d{i}", day_index=day, location_index=location, tokens=tuple(toks))
        for i, toks in enumerate(token_lists)
    ]


def grid_locations(cols, rows):
    """Unit-spaced grid; ids are L00, L01, ... by row-major order."""
    ids = []
    coords = []
    n = 0
    for r in range(rows):
        for c in range(cols):
            ids.append(f"L{n:02d}")
            coords.append((float(c), float(r)))
            n += 1
    return LocationTable(ids, coords)


def synthetic_background_records(
    rng,
    locations,
    n_days,
    topic_terms,
    docs_per_location_day=2.0,
    tokens_per_doc=6,
    start_day=0,
    epoch=date(2024, 1, 1),
    id_prefix="bg",
):
    """Background stream: each document draws its tokens from one topic's term set."""
    records = []
    n_topics = len(topic_terms)
    serial = 0
    for day in range(start_day, start_day + n_days):
        for loc in range(len(locations)):
            for _ in range(rng.poisson(docs_per_location_day)):
                topic = int(rng.integers(0, n_topics))
                terms = topic_terms[topic]
                toks = [terms[i] for i in rng.integers(0, len(terms), size=tokens_per_doc)]
                records.append(
                    RawRecord(
                        id=f"{id_prefix}-{serial}",
                        date=epoch + timedelta(days=day),
                        location_id=locations.ids[loc],
                        text=" ".join(toks),
                        label=f"cat{topic}",
                    )
                )
                serial += 1
    return records


@pytest.fixture
def tiny_vocab():
    return Vocabulary(["a", "b", "c", "d"])


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
