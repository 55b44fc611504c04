"""Contrastive topic refitting against a frozen background model.

The detection-window topics are learned in three phases: background topics
are trained once on history and frozen; a fresh set of foreground topics is
learned on the moving window with plain LDA; the combined set is then
refit with a modified Gibbs sweep in which frozen word distributions act as
observed variables, pushing the free topics toward whatever the background
cannot explain.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .lda import GibbsState, SweepCallback, TopicSet, _Chain, estimate_phi, fit_lda


def combine_topics(background: TopicSet, foreground: TopicSet) -> TopicSet:
    """Stack background topics (frozen) over foreground topics (free)."""
    if background.vocab_size != foreground.vocab_size:
        raise ValueError("background and foreground vocabularies differ")
    phi = np.vstack([background.phi, foreground.phi])
    frozen = np.concatenate(
        [np.ones(background.n_topics, dtype=bool), np.zeros(foreground.n_topics, dtype=bool)]
    )
    return TopicSet(phi, frozen)


def _frozen_prefix(topics: TopicSet) -> int:
    """Frozen topics must form a leading block for the chain layout."""
    n_frozen = topics.n_frozen
    if not np.array_equal(topics.frozen, np.arange(topics.n_topics) < n_frozen):
        raise ValueError("frozen topics must precede free topics")
    return n_frozen


def _resolve_seed(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def init_assignments(
    window_documents: Sequence,
    combined_topics: TopicSet,
    seed=0,
    *,
    alpha: float | None = None,
    beta: float | None = None,
) -> GibbsState:
    """Initial token assignments drawn proportionally to each topic's word weight.

    Token w goes to topic k with probability phi_k(w) / sum_j phi_j(w) across
    the combined frozen and free topics; count tables are built from these
    draws.
    """
    chain = _build_chain(window_documents, combined_topics, alpha, beta, seed)
    rng = np.random.default_rng(_resolve_seed(seed))
    chain.seed_proportional(combined_topics.phi, rng)
    return chain.state()


def _build_chain(window_documents, combined_topics, alpha, beta, seed) -> _Chain:
    if len(window_documents) == 0:
        raise ValueError("no foreground documents")
    n_topics = combined_topics.n_topics
    n_frozen = _frozen_prefix(combined_topics)
    if alpha is None:
        alpha = 1.0 / n_topics
    if beta is None:
        beta = 1.0 / combined_topics.vocab_size
    frozen_phi = combined_topics.phi[:n_frozen] if n_frozen else None
    return _Chain(
        window_documents,
        n_topics,
        combined_topics.vocab_size,
        alpha,
        beta,
        frozen_phi=frozen_phi,
        seed=seed,
    )


def refit_foreground(
    window_documents: Sequence,
    background: TopicSet,
    fg_init: TopicSet,
    sweeps: int = 500,
    seed=0,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    on_sweep: SweepCallback | None = None,
) -> TopicSet:
    """Refit the free topics of the combined model; frozen rows pass through untouched.

    Each sweep resamples every token with Pr(z = k) proportional to
    phi_k(w) * (n_dk + alpha), where phi is the fixed input distribution for
    frozen topics and the count estimate for free ones. The returned set
    carries the background rows bit-identical to the input.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    combined = combine_topics(background, fg_init)
    chain = _build_chain(window_documents, combined, alpha, beta, seed)
    rng = np.random.default_rng(_resolve_seed(seed))
    chain.seed_proportional(combined.phi, rng)
    chain.run(sweeps, rng, on_sweep)
    state = chain.state()
    n_frozen = background.n_topics
    phi = np.vstack([background.phi.copy(), estimate_phi(state)[n_frozen:]])
    frozen = np.concatenate([np.ones(n_frozen, dtype=bool), np.zeros(fg_init.n_topics, dtype=bool)])
    return TopicSet(phi, frozen)


def fit_detection_window(
    window_documents: Sequence,
    background: TopicSet,
    k_prime: int,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    sweeps: int = 500,
    refit_sweeps: int | None = None,
    seed=0,
) -> TopicSet:
    """Learn k_prime fresh window topics with plain LDA, then refit them contrastively.

    ``alpha`` applies to the combined refit (default 1 / (K + K')); the
    window LDA step uses its own default of 1 / K'. ``refit_sweeps``
    defaults to ``sweeps``.
    """
    if len(window_documents) == 0:
        raise ValueError("no foreground documents")
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    ss = _resolve_seed(seed)
    lda_seed, refit_seed = ss.spawn(2)
    fg_init, _ = fit_lda(
        window_documents,
        k_prime,
        background.vocab_size,
        beta=beta,
        sweeps=sweeps,
        seed=lda_seed,
    )
    return refit_foreground(
        window_documents,
        background,
        fg_init,
        sweeps=refit_sweeps if refit_sweeps is not None else sweeps,
        seed=refit_seed,
        alpha=alpha,
        beta=beta,
    )
