"""Query-vector refinement from click logs.

The refined query is a weighted sum of the original query vector and the
vectors of clicked passages.  The plain variant treats every click equally
and is therefore position-biased; the counterfactual variant divides each
click by the examination propensity of the rank it was observed at, which
makes its expectation equal to the ideal refinement computed from true
relevance labels.  An approximate-nearest-neighbour extension handles queries
with no log of their own by borrowing the logs of the closest logged queries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .clicks import ClickLog, Qrels, SessionRecord, grade_of, propensity
from .errors import ConfigError, MissingEmbeddingError, NoFeedbackError
from .store import EmbeddingStore, Ranking, knn_queries

RELEVANT_GRADE = 2  # binary relevance threshold: grades 2 and 3 count as relevant


@dataclass(frozen=True)
class FeedbackConfig:
    """Weights and algorithm selection for query refinement."""

    alpha: float = 0.4
    beta: float = 0.6
    algorithm: str = "corocchio"
    ann_k: int = 3

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("alpha and beta must be >= 0 with alpha + beta > 0")
        if self.algorithm not in ("rocchio", "corocchio"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.ann_k < 1:
            raise ConfigError("ann_k must be >= 1")


def _click_sum(sessions: Sequence[SessionRecord], pstore: EmbeddingStore,
               eta: float, ips: bool) -> np.ndarray:
    """Sum of clicked passage vectors over all sessions, optionally
    reweighted by inverse examination propensity of the click's rank."""
    # Click counts grouped by (pid, rank); every click at the same slot gets
    # the same weight, so the sum collapses to count * weight * vector.
    tally: Dict[Tuple[str, int], int] = {}
    for rec in sessions:
        for i, (pid, c) in enumerate(zip(rec.ranking, rec.clicks), start=1):
            if c:
                tally[(pid, i)] = tally.get((pid, i), 0) + 1
    acc = np.zeros(pstore.dim)
    for (pid, i), count in tally.items():
        if pid not in pstore:
            raise MissingEmbeddingError(f"clicked passage {pid!r} has no embedding")
        if ips:
            w = 1.0 / propensity(i, eta)
            if not np.isfinite(w):
                raise ConfigError(f"non-finite IPS weight at rank {i}, eta={eta}")
        else:
            w = 1.0
        acc += (count * w) * pstore.vector(pid)
    return acc


def _combine(q: np.ndarray, feedback_mean: np.ndarray, cfg: FeedbackConfig) -> np.ndarray:
    return cfg.alpha * np.asarray(q, dtype=np.float64) + cfg.beta * feedback_mean


def rocchio(q: np.ndarray, log_q: Sequence[SessionRecord], pstore: EmbeddingStore,
            cfg: FeedbackConfig = FeedbackConfig()) -> np.ndarray:
    """Position-naive refinement: alpha*q plus the session-averaged sum of
    clicked passage vectors.  Sessions without clicks still count in the
    average."""
    if not log_q:
        raise NoFeedbackError("no sessions for query")
    return _combine(q, _click_sum(log_q, pstore, 0.0, ips=False) / len(log_q), cfg)


def corocchio(q: np.ndarray, log_q: Sequence[SessionRecord], pstore: EmbeddingStore,
              eta: float, cfg: FeedbackConfig = FeedbackConfig()) -> np.ndarray:
    """Counterfactual refinement: like rocchio, but each clicked passage is
    weighted by 1/propensity(rank, eta).  eta must be the exponent the log
    was generated with (propensities are assumed known)."""
    if not log_q:
        raise NoFeedbackError("no sessions for query")
    return _combine(q, _click_sum(log_q, pstore, eta, ips=True) / len(log_q), cfg)


def optimal_qstar(q: np.ndarray, rankings: Sequence[Ranking], qrels: Qrels,
                  pstore: EmbeddingStore,
                  cfg: FeedbackConfig = FeedbackConfig()) -> np.ndarray:
    """The ideal refined query: aggregates exactly the displayed passages with
    binary relevance grade >= 2 (grade 1 is relabeled non-relevant)."""
    if not rankings:
        raise NoFeedbackError("no rankings for query")
    acc = np.zeros(pstore.dim)
    for r in rankings:
        for pid in r.passage_ids:
            if grade_of(qrels, r.query_id, pid) >= RELEVANT_GRADE:
                if pid not in pstore:
                    raise MissingEmbeddingError(f"passage {pid!r} has no embedding")
                acc += pstore.vector(pid)
    return _combine(q, acc / len(rankings), cfg)


def feedback_ann(q_u: np.ndarray, qstore: EmbeddingStore, log: ClickLog,
                 pstore: EmbeddingStore, eta: float,
                 cfg: FeedbackConfig = FeedbackConfig()) -> np.ndarray:
    """Refine an unlogged query by borrowing the click logs of its nearest
    logged queries.

    The k nearest logged queries are found by inner product; each neighbour
    contributes its own session-averaged (and, in corocchio mode,
    IPS-weighted) click sum, and the contributions are averaged.  k silently
    truncates to the store size.
    """
    k = min(cfg.ann_k, len(qstore))
    neighbors = knn_queries(qstore, q_u, k)
    ips = cfg.algorithm == "corocchio"
    feedback = np.zeros(pstore.dim)
    for qid in neighbors:
        sessions = log.sessions.get(qid)
        if not sessions:
            raise NoFeedbackError(f"neighbor query {qid!r} has no sessions in the log")
        feedback += _click_sum(sessions, pstore, eta, ips) / len(sessions)
    return _combine(q_u, feedback / len(neighbors), cfg)


def refine_logged(q: np.ndarray, log_q: Sequence[SessionRecord],
                  pstore: EmbeddingStore, eta: float,
                  cfg: FeedbackConfig) -> np.ndarray:
    """Dispatch on cfg.algorithm for a query present in the log."""
    if cfg.algorithm == "rocchio":
        return rocchio(q, log_q, pstore, cfg)
    return corocchio(q, log_q, pstore, eta, cfg)


class ClickFeedbackRefiner:
    """Estimator-style wrapper: fit on a click log, transform query vectors.

    fit() binds the historic click log plus the passage and query stores;
    transform() refines a matrix of query vectors through the ANN path (the
    queries need not appear in the log).  transform_logged() refines queries
    by id using their own sessions.  Parameters follow the scikit-learn
    get_params/set_params protocol so the refiner can sit in pipelines and
    grid searches.
    """

    def __init__(self, alpha: float = 0.4, beta: float = 0.6,
                 algorithm: str = "corocchio", ann_k: int = 3):
        self.alpha = alpha
        self.beta = beta
        self.algorithm = algorithm
        self.ann_k = ann_k

    def get_params(self, deep: bool = True) -> Dict:
        return {"alpha": self.alpha, "beta": self.beta,
                "algorithm": self.algorithm, "ann_k": self.ann_k}

    def set_params(self, **params) -> "ClickFeedbackRefiner":
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"invalid parameter {key!r}")
            setattr(self, key, value)
        return self

    def _config(self) -> FeedbackConfig:
        return FeedbackConfig(self.alpha, self.beta, self.algorithm, self.ann_k)

    def fit(self, log: ClickLog, pstore: EmbeddingStore,
            qstore: EmbeddingStore) -> "ClickFeedbackRefiner":
        self._config()  # validate parameters eagerly
        self.log_ = log
        self.pstore_ = pstore
        self.qstore_ = qstore
        self.eta_ = log.meta.eta if log.meta is not None else 0.0
        return self

    def _check_fitted(self):
        if not hasattr(self, "log_"):
            raise ConfigError("refiner is not fitted; call fit() first")

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Refine each row of X via the nearest-neighbour log lookup."""
        self._check_fitted()
        cfg = self._config()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.stack([
            feedback_ann(x, self.qstore_, self.log_, self.pstore_, self.eta_, cfg)
            for x in X
        ])

    def fit_transform(self, log: ClickLog, pstore: EmbeddingStore,
                      qstore: EmbeddingStore, X: np.ndarray) -> np.ndarray:
        return self.fit(log, pstore, qstore).transform(X)

    def transform_logged(self, query_ids: Sequence[str]) -> np.ndarray:
        """Refine logged queries by id, each from its own sessions."""
        self._check_fitted()
        cfg = self._config()
        rows = []
        for qid in query_ids:
            sessions = self.log_.sessions.get(qid)
            if not sessions:
                raise NoFeedbackError(f"query {qid!r} has no sessions in the log")
            rows.append(refine_logged(self.qstore_.vector(qid), sessions,
                                      self.pstore_, self.eta_, cfg))
        return np.stack(rows)
