"""Synthetic corpus generation: embeddings, graded judgments, query splits.

Queries come in small topic clusters: each cluster has a centroid drawn
uniformly on the unit sphere, a handful of related query vectors scattered
tightly around it, and a shared set of judged passages scattered more widely
(higher grades closer; noise scale proportional to 4 - grade).  Every query
of a cluster shares the cluster's judgments, the way related reformulations
of the same information need share a relevant set.  The query-to-centroid
gap models vocabulary mismatch between query and passage language, and the
within-cluster query spread is what gives an unlogged query genuinely
related neighbours in the historic log.  Distractors are independent sphere
draws that never appear in the judgments.  Unseen queries are perturbed copies of held-out queries that
inherit the originals' judgments, standing in for generated related queries.

Everything is a pure function of the config: the same seed yields identical
stores, judgments and splits.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .clicks import Qrels
from .errors import ConfigError
from .store import EmbeddingStore


def _default_grade_mix() -> Dict[int, float]:
    return {0: 0.5, 1: 0.3, 2: 0.1, 3: 0.1}


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 64
    n_queries: int = 200
    passages_per_query: int = 25
    grade_mix: Dict[int, float] = field(default_factory=_default_grade_mix)
    intra_cluster_noise: float = 0.6   # sigma_p; see decisions ledger
    cluster_offset: float = 0.15       # query-to-centroid gap (vocabulary mismatch)
    queries_per_cluster: int = 4       # related queries sharing a judged set
    distractor_count: int = 5000
    unseen_fraction: float = 0.2
    unseen_noise: float = 0.15         # sigma_u
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n_queries < 1 or self.passages_per_query < 1:
            raise ConfigError("dim, n_queries and passages_per_query must be >= 1")
        if self.distractor_count < 0 or self.intra_cluster_noise < 0 or self.unseen_noise < 0:
            raise ConfigError("noise scales and distractor_count must be >= 0")
        if self.cluster_offset < 0:
            raise ConfigError("cluster_offset must be >= 0")
        if self.queries_per_cluster < 1:
            raise ConfigError("queries_per_cluster must be >= 1")
        if not 0 <= self.unseen_fraction < 1:
            raise ConfigError("unseen_fraction must be in [0, 1)")
        mix = self.grade_mix
        if set(mix) - {0, 1, 2, 3} or any(p < 0 for p in mix.values()):
            raise ConfigError("grade_mix must be a distribution over grades 0..3")
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ConfigError("grade_mix must sum to 1")
        if mix.get(2, 0.0) + mix.get(3, 0.0) <= 0:
            raise ConfigError("grade_mix needs positive mass on grade 2 or 3")


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _sphere(rng: np.random.Generator, dim: int) -> np.ndarray:
    return _normalize(rng.standard_normal(dim))


def gen_corpus(cfg: SynthConfig) -> Tuple[EmbeddingStore, EmbeddingStore, Qrels]:
    """Generate the passage store, logged-query store and graded judgments.

    Emits exactly n_queries queries, grouped into clusters of
    queries_per_cluster (the last cluster may be smaller).  Each cluster has
    passages_per_query judged passages; every query of the cluster carries
    the same judgments for them.
    """
    rng = np.random.default_rng([cfg.seed, 0xC0])
    grades = sorted(cfg.grade_mix)
    probs = np.array([cfg.grade_mix[g] for g in grades])
    pids, pvecs = [], []
    qids, qvecs = [], []
    qrels: Qrels = {}
    n_clusters = -(-cfg.n_queries // cfg.queries_per_cluster)
    emitted = 0
    for ci in range(n_clusters):
        centroid = _sphere(rng, cfg.dim)
        cluster_qids = []
        for j in range(min(cfg.queries_per_cluster, cfg.n_queries - emitted)):
            qid = f"c{ci:03d}-q{j}"
            qids.append(qid)
            qvecs.append(_normalize(
                centroid + cfg.cluster_offset * rng.standard_normal(cfg.dim)))
            cluster_qids.append(qid)
            emitted += 1
        judged = {}
        drawn = rng.choice(grades, size=cfg.passages_per_query, p=probs)
        for pi, grade in enumerate(drawn):
            g = int(grade)
            scale = cfg.intra_cluster_noise * (4 - g) / 4.0
            vec = _normalize(centroid + scale * rng.standard_normal(cfg.dim))
            pid = f"c{ci:03d}-p{pi:03d}"
            pids.append(pid)
            pvecs.append(vec)
            judged[pid] = g
        for qid in cluster_qids:
            qrels[qid] = dict(judged)
    for di in range(cfg.distractor_count):
        pids.append(f"x{di:05d}")
        pvecs.append(_sphere(rng, cfg.dim))
    pstore = EmbeddingStore(pids, np.stack(pvecs), kind="passage-store")
    qstore = EmbeddingStore(qids, np.stack(qvecs), kind="query-store")
    return pstore, qstore, qrels


def split_queries(qstore: EmbeddingStore, cfg: SynthConfig) -> Tuple[EmbeddingStore, EmbeddingStore]:
    """Seeded partition into (seen, unseen_base) stores.

    The unseen share is floor(unseen_fraction * n), but at least one query is
    held out whenever the fraction is positive and two or more queries exist.
    """
    if len(qstore) == 0:
        raise ConfigError("query store is empty")
    rng = np.random.default_rng([cfg.seed, 0x51])
    ids = sorted(qstore.ids)
    order = rng.permutation(len(ids))
    n_unseen = int(cfg.unseen_fraction * len(ids))
    if cfg.unseen_fraction > 0 and len(ids) >= 2:
        n_unseen = max(1, n_unseen)
    unseen_ids = sorted(ids[i] for i in order[:n_unseen])
    seen_ids = sorted(ids[i] for i in order[n_unseen:])
    seen = EmbeddingStore(seen_ids, np.stack([qstore.vector(i) for i in seen_ids])
                          if seen_ids else np.zeros((0, qstore.dim)), kind="query-store")
    unseen = EmbeddingStore(unseen_ids, np.stack([qstore.vector(i) for i in unseen_ids])
                            if unseen_ids else np.zeros((0, qstore.dim)), kind="query-store")
    return seen, unseen


def unseen_id(base_id: str) -> str:
    return f"{base_id}-u"


def base_id_of(uid: str) -> str:
    if not uid.endswith("-u"):
        raise ConfigError(f"{uid!r} is not a generated unseen query id")
    return uid[:-2]


def gen_unseen_queries(unseen_base: EmbeddingStore, sigma_u: float, seed: int) -> EmbeddingStore:
    """Perturb each held-out query into an unseen-but-related query.

    Each unseen vector is normalize(base + sigma_u * gaussian) and shares the
    base query's relevance judgments (see derive_unseen_qrels).
    """
    if sigma_u < 0:
        raise ConfigError("sigma_u must be >= 0")
    rng = np.random.default_rng([seed, 0xA7])
    ids, vecs = [], []
    for bid in unseen_base.ids:
        base = unseen_base.vector(bid)
        vecs.append(_normalize(base + sigma_u * rng.standard_normal(len(base))))
        ids.append(unseen_id(bid))
    return EmbeddingStore(ids, np.stack(vecs) if ids else np.zeros((0, unseen_base.dim)),
                          kind="query-store")


def derive_unseen_qrels(qrels: Qrels, unseen_store: EmbeddingStore) -> Qrels:
    """Judgments for unseen queries: each inherits its base query's entries."""
    return {uid: dict(qrels[base_id_of(uid)]) for uid in unseen_store.ids}


def save_manifest(cfg: SynthConfig, path) -> None:
    rec = dataclasses.asdict(cfg)
    rec["grade_mix"] = {str(g): p for g, p in cfg.grade_mix.items()}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(rec, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path) -> SynthConfig:
    with open(path, "r", encoding="utf-8") as f:
        rec = json.load(f)
    rec["grade_mix"] = {int(g): float(p) for g, p in rec["grade_mix"].items()}
    return SynthConfig(**rec)
