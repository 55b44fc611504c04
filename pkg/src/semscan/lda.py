"""Latent Dirichlet Allocation via collapsed Gibbs sampling.

One chain implementation drives both the plain sampler and the
frozen-background variant used for contrastive refitting: topics below
``n_frozen`` keep a fixed word distribution and never read their counts
back while sampling, all other topics are estimated from counts with the
current token excluded.
"""

from __future__ import annotations

import csv
import json
import logging
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Vocabulary

logger = logging.getLogger(__name__)

SweepCallback = Callable[["GibbsState", int], None]


@dataclass
class GibbsState:
    """Token-level assignments and the four count tables they induce."""

    z: list[np.ndarray]  # per document: topic index per token
    n_kw: np.ndarray  # (topics, vocab) assignments of term w to topic k
    n_k: np.ndarray  # (topics,) assignments to topic k
    n_dk: np.ndarray  # (docs, topics) assignments in document d to topic k
    n_d: np.ndarray  # (docs,) tokens in document d
    alpha: float
    beta: float
    n_topics: int
    seed: object = None

    @property
    def vocab_size(self) -> int:
        return self.n_kw.shape[1]


@dataclass(frozen=True)
class TopicSet:
    """Per-topic word distributions with per-topic frozen/free flags."""

    phi: np.ndarray  # (topics, vocab), rows sum to 1
    frozen: np.ndarray  # (topics,) bool

    def __post_init__(self):
        frozen = np.asarray(self.frozen, dtype=bool)
        object.__setattr__(self, "frozen", frozen)
        if frozen.shape != (self.phi.shape[0],):
            raise ValueError("frozen flags must match the number of topics")

    @property
    def n_topics(self) -> int:
        return self.phi.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.phi.shape[1]

    @property
    def n_frozen(self) -> int:
        return int(self.frozen.sum())

    @property
    def n_free(self) -> int:
        return self.n_topics - self.n_frozen

    def validate(self, atol: float = 1e-9) -> None:
        sums = self.phi.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= atol):
            raise ValueError("topic rows must sum to 1")
        if not np.all(self.phi > 0.0):
            raise ValueError("topic entries must be strictly positive")

    def top_terms(self, topic: int, vocabulary: Vocabulary, n: int = 20) -> list[str]:
        """Highest-probability terms of one topic, ties broken by lower index."""
        order = np.argsort(-self.phi[topic], kind="stable")[:n]
        return [vocabulary.terms[i] for i in order]


def _token_lists(documents: Iterable) -> list[list[int]]:
    out = []
    for doc in documents:
        out.append(list(getattr(doc, "tokens", doc)))
    return out


class _Chain:
    """Mutable collapsed-Gibbs state over a flattened token stream.

    Count tables live in plain Python lists during sweeps; the per-token
    conditional touches only a handful of floats, where numpy scalar
    overhead would dominate.
    """

    def __init__(self, documents, n_topics, vocab_size, alpha, beta, frozen_phi=None, seed=None):
        docs = _token_lists(documents)
        if not docs:
            raise ValueError("corpus is empty")
        if n_topics < 1:
            raise ValueError("n_topics must be >= 1")
        empty = sum(1 for d in docs if not d)
        if empty:
            logger.warning("%d of %d documents have no in-vocabulary tokens", empty, len(docs))
        self.n_docs = len(docs)
        self.n_topics = int(n_topics)
        self.vocab_size = int(vocab_size)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.vbeta = self.vocab_size * self.beta
        self.seed = seed

        words: list[int] = []
        offsets = [0]
        for d in docs:
            words.extend(d)
            offsets.append(len(words))
        if words and (min(words) < 0 or max(words) >= vocab_size):
            raise ValueError("token index out of vocabulary range")
        self.words = words
        self.offsets = offsets
        self.n_tokens = len(words)

        if frozen_phi is None:
            self.n_frozen = 0
            self.frozen_wk: list[list[float]] | None = None
            self.frozen_phi = None
        else:
            fp = np.ascontiguousarray(frozen_phi, dtype=np.float64)
            if fp.ndim != 2 or fp.shape[1] != vocab_size:
                raise ValueError("frozen_phi must be (n_frozen, vocab_size)")
            if fp.shape[0] > n_topics:
                raise ValueError("more frozen topics than topics")
            self.n_frozen = fp.shape[0]
            self.frozen_phi = fp
            self.frozen_wk = fp.T.tolist()  # per word: frozen-topic probabilities

        self.z: list[int] = [0] * self.n_tokens
        self.nwk: list[list[int]] = []
        self.nk: list[int] = []
        self.ndk: list[list[int]] = []
        self.nd: list[int] = [offsets[i + 1] - offsets[i] for i in range(self.n_docs)]
        self._buf = [0.0] * self.n_topics

    # --- seeding -----------------------------------------------------------

    def seed_uniform(self, rng: np.random.Generator) -> None:
        self.z = rng.integers(0, self.n_topics, size=self.n_tokens).tolist()
        self._rebuild_counts()

    def seed_proportional(self, phi: np.ndarray, rng: np.random.Generator) -> None:
        """Draw each token's initial topic with probability proportional to phi[k, w]."""
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.n_topics, self.vocab_size):
            raise ValueError("phi must be (n_topics, vocab_size)")
        if self.n_tokens == 0:
            self._rebuild_counts()
            return
        per_word = phi / phi.sum(axis=0, keepdims=True)
        cum = np.cumsum(per_word.T, axis=1)  # (vocab, topics)
        rows = cum[np.asarray(self.words, dtype=np.intp)]
        u = rng.random(self.n_tokens)
        z = (rows < u[:, None]).sum(axis=1)
        np.clip(z, 0, self.n_topics - 1, out=z)
        self.z = z.tolist()
        self._rebuild_counts()

    def _rebuild_counts(self) -> None:
        T = self.n_topics
        self.nwk = [[0] * T for _ in range(self.vocab_size)]
        self.nk = [0] * T
        self.ndk = [[0] * T for _ in range(self.n_docs)]
        nwk, nk, ndk = self.nwk, self.nk, self.ndk
        words, z, offsets = self.words, self.z, self.offsets
        for d in range(self.n_docs):
            row = ndk[d]
            for i in range(offsets[d], offsets[d + 1]):
                k = z[i]
                nwk[words[i]][k] += 1
                nk[k] += 1
                row[k] += 1

    # --- sampling ----------------------------------------------------------

    def sweep(self, rng: np.random.Generator) -> None:
        """One full pass re-sampling every token's topic assignment."""
        uniforms = rng.random(self.n_tokens).tolist() if self.n_tokens else []
        words, z = self.words, self.z
        nwk, nk, ndk = self.nwk, self.nk, self.ndk
        offsets = self.offsets
        alpha, beta, vbeta = self.alpha, self.beta, self.vbeta
        K0, T = self.n_frozen, self.n_topics
        fwk = self.frozen_wk
        buf = self._buf
        for d in range(self.n_docs):
            nd_row = ndk[d]
            for i in range(offsets[d], offsets[d + 1]):
                w = words[i]
                k = z[i]
                row = nwk[w]
                # Current token leaves the counts before the conditional.
                row[k] -= 1
                nk[k] -= 1
                nd_row[k] -= 1
                total = 0.0
                if K0:
                    fw = fwk[w]
                    for j in range(K0):
                        total += fw[j] * (nd_row[j] + alpha)
                        buf[j] = total
                for j in range(K0, T):
                    total += (row[j] + beta) / (nk[j] + vbeta) * (nd_row[j] + alpha)
                    buf[j] = total
                k = bisect_right(buf, uniforms[i] * total, 0, T)
                if k >= T:  # guard against u*total == total at float precision
                    k = T - 1
                row[k] += 1
                nk[k] += 1
                nd_row[k] += 1
                z[i] = k

    def run(self, sweeps: int, rng: np.random.Generator, on_sweep: SweepCallback | None = None) -> None:
        for s in range(sweeps):
            self.sweep(rng)
            if on_sweep is not None:
                on_sweep(self.state(), s)

    # --- snapshots ----------------------------------------------------------

    def state(self) -> GibbsState:
        n_kw = np.asarray(self.nwk, dtype=np.int64).T.copy() if self.vocab_size else np.zeros((self.n_topics, 0), dtype=np.int64)
        n_k = np.asarray(self.nk, dtype=np.int64)
        n_dk = np.asarray(self.ndk, dtype=np.int64)
        n_d = np.asarray(self.nd, dtype=np.int64)
        z = [
            np.asarray(self.z[self.offsets[d] : self.offsets[d + 1]], dtype=np.int32)
            for d in range(self.n_docs)
        ]
        return GibbsState(z, n_kw, n_k, n_dk, n_d, self.alpha, self.beta, self.n_topics, self.seed)


def estimate_phi(state: GibbsState) -> np.ndarray:
    """Smoothed per-topic word distributions from the count tables."""
    beta = state.beta
    return (state.n_kw + beta) / (state.n_k[:, None] + state.vocab_size * beta)


def estimate_theta(state: GibbsState, d: int) -> np.ndarray:
    """Smoothed topic mixture of document ``d``."""
    alpha = state.alpha
    return (state.n_dk[d] + alpha) / (state.n_d[d] + state.n_topics * alpha)


def audit_counts(state: GibbsState) -> None:
    """Verify the count-table consistency identities; raises ``ValueError``.

    Checks, exactly: row sums of n_kw equal n_k; row sums of n_dk equal
    n_d; n_d equals each document's token count; all counts non-negative.
    The tables are additionally rebuilt from ``z`` and compared.
    """
    if np.any(state.n_kw < 0) or np.any(state.n_dk < 0):
        raise ValueError("count audit failed: negative counts")
    if not np.array_equal(state.n_kw.sum(axis=1), state.n_k):
        raise ValueError("count audit failed: sum_w n_kw != n_k")
    if not np.array_equal(state.n_dk.sum(axis=1), state.n_d):
        raise ValueError("count audit failed: sum_k n_dk != n_d")
    lengths = np.asarray([len(zd) for zd in state.z], dtype=np.int64)
    if not np.array_equal(lengths, state.n_d):
        raise ValueError("count audit failed: n_d != document token counts")
    rebuilt_dk = np.zeros_like(state.n_dk)
    for d, zd in enumerate(state.z):
        for k in zd:
            rebuilt_dk[d, k] += 1
    if not np.array_equal(rebuilt_dk, state.n_dk):
        raise ValueError("count audit failed: n_dk inconsistent with z")


def fit_lda(
    documents: Sequence,
    n_topics: int,
    vocab_size: int,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    sweeps: int = 500,
    seed=0,
    on_sweep: SweepCallback | None = None,
) -> tuple[TopicSet, GibbsState]:
    """Fit plain LDA with a collapsed Gibbs sampler.

    Defaults follow the usual smoothing scale: alpha = 1/n_topics and
    beta = 1/vocab_size. Initial assignments are uniform from the seeded
    generator; phi is the point estimate from the final sweep. Fixed seed
    implies bit-identical output.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if alpha is None:
        alpha = 1.0 / n_topics
    if beta is None:
        beta = 1.0 / vocab_size
    rng = np.random.default_rng(seed)
    chain = _Chain(documents, n_topics, vocab_size, alpha, beta, seed=seed)
    chain.seed_uniform(rng)
    chain.run(sweeps, rng, on_sweep)
    state = chain.state()
    phi = estimate_phi(state)
    topics = TopicSet(phi, np.zeros(n_topics, dtype=bool))
    return topics, state


# --- serialization ----------------------------------------------------------


def write_topics_csv(topics: TopicSet, vocabulary: Vocabulary, path, metadata: dict | None = None) -> None:
    """Write a topic matrix as CSV (rows = topics) plus a JSON metadata sidecar."""
    if len(vocabulary) != topics.vocab_size:
        raise ValueError("vocabulary size does not match topic matrix")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic", "frozen", *vocabulary.terms])
        for k in range(topics.n_topics):
            writer.writerow([k, int(topics.frozen[k]), *(repr(float(v)) for v in topics.phi[k])])
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(metadata or {}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_topics_csv(path) -> tuple[TopicSet, Vocabulary, dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["topic", "frozen"]:
            raise ValueError(f"{path}: expected header topic,frozen,<terms...>")
        terms = header[2:]
        rows = []
        frozen = []
        for row in reader:
            frozen.append(bool(int(row[1])))
            rows.append([float(v) for v in row[2:]])
    phi = np.asarray(rows, dtype=np.float64)
    meta_path = str(path) + ".meta.json"
    try:
        with open(meta_path, encoding="utf-8") as fh:
            metadata = json.load(fh)
    except FileNotFoundError:
        metadata = {}
    return TopicSet(phi, np.asarray(frozen, dtype=bool)), Vocabulary(terms), metadata
