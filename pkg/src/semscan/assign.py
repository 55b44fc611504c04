"""Deterministic online assignment of documents to their most likely topic.

Assignment is an EM-style fixed-point iteration over a document's topic
mixture with the topics held fixed. It involves no randomness, so identical
documents always land on the same topic.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date as Date, timedelta
from typing import Sequence

import numpy as np

from .corpus import Document, LocationTable
from .lda import TopicSet


@dataclass(frozen=True)
class AssignedDocument:
    document: Document
    topic_index: int  # index into the combined topic set
    theta: np.ndarray  # final mixture over all topics
    is_foreground: bool
    foreground_index: int | None  # topic_index - K for foreground topics
    degenerate: bool = False  # no in-vocabulary tokens


def assign_document(
    document: Document,
    topics: TopicSet,
    *,
    alpha: float | None = None,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> AssignedDocument:
    """Assign ``document`` to its argmax topic under fixed word distributions.

    theta starts uniform; each iteration computes per-token topic
    responsibilities proportional to phi_k(w) * theta_k, then resets
    theta_k proportional to alpha + summed responsibilities. Stops when the
    largest theta change drops below ``tol``. Argmax ties resolve to the
    lowest topic index.
    """
    n_topics = topics.n_topics
    n_frozen = topics.n_frozen
    if alpha is None:
        alpha = 1.0 / n_topics
    if not document.tokens:
        theta = np.full(n_topics, 1.0 / n_topics)
        is_fg = n_frozen == 0
        return AssignedDocument(document, 0, theta, is_fg, 0 if is_fg else None, True)
    words, counts = np.unique(np.asarray(document.tokens, dtype=np.intp), return_counts=True)
    counts = counts.astype(np.float64)
    phi_w = topics.phi[:, words]  # (topics, unique words)
    theta = np.full(n_topics, 1.0 / n_topics)
    for _ in range(max_iters):
        resp = phi_w * theta[:, None]
        resp /= resp.sum(axis=0)  # strictly positive: phi > 0 everywhere
        new_theta = alpha + resp @ counts
        new_theta /= new_theta.sum()
        delta = float(np.max(np.abs(new_theta - theta)))
        theta = new_theta
        if delta < tol:
            break
    topic = int(np.argmax(theta))  # first occurrence = lowest index on ties
    is_fg = topic >= n_frozen
    return AssignedDocument(document, topic, theta, is_fg, topic - n_frozen if is_fg else None)


def assign_corpus_window(
    documents: Sequence[Document],
    topics: TopicSet,
    detection_day: int,
    *,
    baseline_days: int = 30,
    window_days: int = 3,
    alpha: float | None = None,
    max_iters: int = 100,
    tol: float = 1e-6,
    n_jobs: int = 1,
) -> list[AssignedDocument]:
    """Assign every document in the detection window plus the baseline span.

    Covers day indices [detection_day - (baseline_days + window_days - 1),
    detection_day]. Assignment is pure per document, so the parallel path
    returns exactly the sequential result in input order.
    """
    start = detection_day - (baseline_days + window_days - 1)
    chosen = [d for d in documents if start <= d.day_index <= detection_day]

    def _one(doc: Document) -> AssignedDocument:
        return assign_document(doc, topics, alpha=alpha, max_iters=max_iters, tol=tol)

    if n_jobs <= 1 or len(chosen) < 2:
        return [_one(d) for d in chosen]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_one, chosen))


def write_assignments_csv(
    assigned: Sequence[AssignedDocument],
    locations: LocationTable,
    path,
    *,
    epoch: Date | None = None,
) -> None:
    """Audit dump: doc_id, day, location, topic, is_foreground, theta_max.

    Days are written as ISO dates when ``epoch`` is given, day indices
    otherwise.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "day", "location", "topic", "is_foreground", "theta_max"])
        for a in assigned:
            doc = a.document
            day = (epoch + timedelta(days=doc.day_index)).isoformat() if epoch else doc.day_index
            writer.writerow(
                [
                    doc.id,
                    day,
                    locations.ids[doc.location_index],
                    a.topic_index,
                    int(a.is_foreground),
                    repr(float(a.theta[a.topic_index])),
                ]
            )
