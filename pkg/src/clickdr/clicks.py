"""Click simulation over static SERPs and the historic click log.

A simulated user examines each rank with probability (1/rank)^eta and, if the
passage was examined, clicks it with a probability that depends only on its
relevance grade.  Two uniform draws are consumed per result slot, in rank
order, whether or not the examination succeeds; this fixed consumption
contract is what makes logs reproducible and order-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import ConfigError, DomainError, IngestError
from .rng import SplitMix64, seed_derive, uniform_block
from .store import EmbeddingStore, Ranking, top_k

# Click probability given examination, per relevance grade 0..3.
PERFECT_TABLE = {0: 0.0, 1: 0.0, 2: 1.0, 3: 1.0}
NOISY_TABLE = {0: 0.2, 1: 0.4, 2: 0.8, 3: 0.9}

# qid -> (pid -> grade); unlisted pairs mean grade 0
Qrels = Dict[str, Dict[str, int]]


@dataclass(frozen=True)
class UserModel:
    """A click behaviour (perfect or noisy) plus position-bias exponent eta."""

    behavior: str
    eta: float

    def __post_init__(self):
        if self.behavior not in ("perfect", "noisy"):
            raise ConfigError(f"unknown behavior {self.behavior!r}")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")

    @property
    def click_table(self) -> Dict[int, float]:
        return PERFECT_TABLE if self.behavior == "perfect" else NOISY_TABLE


def propensity(rank: int, eta: float) -> float:
    """Examination probability (1/rank)^eta for a 1-based rank."""
    if rank < 1:
        raise DomainError(f"rank must be >= 1, got {rank}")
    return (1.0 / rank) ** eta


def click_prob(grade: int, model: UserModel) -> float:
    """Click probability given examination, for a relevance grade 0..3."""
    return model.click_table[grade]


def grade_of(qrels: Qrels, qid: str, pid: str) -> int:
    """Judged grade, with unjudged pairs treated as grade 0."""
    return qrels.get(qid, {}).get(pid, 0)


@dataclass(frozen=True)
class SessionRecord:
    """One recorded SERP impression: the ranking shown and the click bitmap."""

    query_id: str
    ranking: List[str]
    clicks: List[int]

    def __post_init__(self):
        if len(self.ranking) != len(self.clicks):
            raise IngestError("clicks bitmap length does not match ranking length")
        if any(c not in (0, 1) for c in self.clicks):
            raise IngestError("clicks must be 0 or 1")


@dataclass(frozen=True)
class ClickLogMeta:
    eta: float
    behavior: str
    serp_depth: int
    sessions_per_query: int
    master_seed: int


@dataclass
class ClickLog:
    """All recorded sessions, keyed by query id."""

    sessions: Dict[str, List[SessionRecord]] = field(default_factory=dict)
    serp_depth: int = 10
    meta: ClickLogMeta = None

    def __post_init__(self):
        for qid, recs in self.sessions.items():
            if not recs:
                raise IngestError(f"query {qid!r} listed with zero sessions")
            for rec in recs:
                if rec.query_id != qid:
                    raise IngestError(
                        f"session for {rec.query_id!r} filed under {qid!r}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ClickLog)
            and self.sessions == other.sessions
            and self.serp_depth == other.serp_depth
            and self.meta == other.meta
        )


def simulate_session(ranking: Ranking, qrels: Qrels, model: UserModel,
                     rng: SplitMix64) -> SessionRecord:
    """Simulate one user session over a SERP.

    Per rank: an examination draw against (1/rank)^eta, then a click draw
    against the grade's click probability.  Both draws are always consumed so
    streams stay aligned across parameter changes.
    """
    if len(ranking) == 0:
        raise DomainError("cannot simulate a session over an empty ranking")
    clicks = []
    for i, pid in enumerate(ranking.passage_ids, start=1):
        u_obs = rng.uniform()
        u_click = rng.uniform()
        observed = u_obs < propensity(i, model.eta)
        clicked = observed and u_click < click_prob(grade_of(qrels, ranking.query_id, pid), model)
        clicks.append(1 if clicked else 0)
    return SessionRecord(ranking.query_id, ranking.passage_ids, clicks)


def _simulate_query_sessions(ranking: Ranking, qrels: Qrels, model: UserModel,
                             master_seed: int, n_sessions: int) -> List[SessionRecord]:
    # Vectorised across sessions; bit-identical to calling simulate_session
    # with SplitMix64(seed_derive(master_seed, qid, s)) for each s.
    qid = ranking.query_id
    pids = ranking.passage_ids
    depth = len(pids)
    seeds = np.array(
        [seed_derive(master_seed, qid, s) for s in range(n_sessions)], dtype=np.uint64)
    draws = uniform_block(seeds, 2 * depth)
    props = np.array([propensity(i, model.eta) for i in range(1, depth + 1)])
    cps = np.array([click_prob(grade_of(qrels, qid, p), model) for p in pids])
    observed = draws[:, 0::2] < props[None, :]
    clicked = (observed & (draws[:, 1::2] < cps[None, :])).astype(int).tolist()
    return [SessionRecord(qid, pids, row) for row in clicked]


def build_click_log(pstore: EmbeddingStore, qstore: EmbeddingStore, qrels: Qrels,
                    model: UserModel, sessions_per_query: int = 1000,
                    serp_depth: int = 10, master_seed: int = 0) -> ClickLog:
    """Simulate the historic click log over every query in the query store.

    The baseline SERP is retrieved once per query and reused for all of its
    sessions (the underlying retriever is static).  Session RNG streams are
    seeded per (query, session), so output is independent of scheduling.
    """
    if pstore.dim != qstore.dim:
        raise ConfigError("passage and query stores have different dimensions")
    if sessions_per_query < 1 or serp_depth < 1:
        raise ConfigError("sessions_per_query and serp_depth must be >= 1")
    sessions: Dict[str, List[SessionRecord]] = {}
    for qid in qstore.ids:
        ranking = top_k(pstore, qstore.vector(qid), serp_depth, query_id=qid)
        if len(ranking) == 0:
            raise ConfigError(f"empty SERP for query {qid!r}")
        sessions[qid] = _simulate_query_sessions(
            ranking, qrels, model, master_seed, sessions_per_query)
    meta = ClickLogMeta(model.eta, model.behavior, serp_depth,
                        sessions_per_query, master_seed)
    return ClickLog(sessions, serp_depth, meta)


def save_click_log(log: ClickLog, path) -> None:
    """Write a click log as JSONL: one meta header line, one session per line."""
    meta = log.meta
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"meta": {
            "eta": meta.eta, "behavior": meta.behavior,
            "serp_depth": meta.serp_depth, "sessions": meta.sessions_per_query,
            "seed": meta.master_seed}}) + "\n")
        for qid in log.sessions:
            # sessions of one query share a ranking; serialize it once
            qid_json = json.dumps(qid)
            last_ranking, ranking_json = None, None
            lines = []
            for s, rec in enumerate(log.sessions[qid]):
                if rec.ranking is not last_ranking:
                    last_ranking = rec.ranking
                    ranking_json = json.dumps(rec.ranking)
                clicks_json = ",".join(map(str, rec.clicks))
                lines.append(f'{{"qid": {qid_json}, "session": {s}, '
                             f'"ranking": {ranking_json}, "clicks": [{clicks_json}]}}\n')
            f.writelines(lines)


def load_click_log(path) -> ClickLog:
    sessions: Dict[str, List[SessionRecord]] = {}
    meta = None
    serp_depth = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"line {lineno}: {e}") from e
            if lineno == 0:
                if "meta" not in rec:
                    raise IngestError("line 0: missing meta header")
                m = rec["meta"]
                try:
                    meta = ClickLogMeta(float(m["eta"]), m["behavior"],
                                        int(m["serp_depth"]), int(m["sessions"]),
                                        int(m["seed"]))
                except (KeyError, TypeError, ValueError) as e:
                    raise IngestError(f"line 0: bad meta: {e}") from e
                serp_depth = meta.serp_depth
                continue
            try:
                sess = SessionRecord(rec["qid"], list(rec["ranking"]),
                                     [int(c) for c in rec["clicks"]])
            except (KeyError, TypeError, ValueError, IngestError) as e:
                raise IngestError(f"line {lineno}: {e}") from e
            if len(sess.ranking) > serp_depth:
                raise IngestError(f"line {lineno}: ranking longer than serp_depth")
            sessions.setdefault(sess.query_id, []).append(sess)
    if meta is None:
        raise IngestError(f"{path}: empty click-log file (no meta header)")
    return ClickLog(sessions, serp_depth, meta)


def load_qrels(path) -> Qrels:
    """Read TREC qrels: whitespace-separated `qid 0 pid grade` lines."""
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise IngestError(f"qrels line {lineno}: expected 4 fields")
            qid, _, pid, grade = parts
            try:
                g = int(grade)
            except ValueError as e:
                raise IngestError(f"qrels line {lineno}: bad grade {grade!r}") from e
            if g not in (0, 1, 2, 3):
                raise IngestError(f"qrels line {lineno}: grade {g} outside 0..3")
            qrels.setdefault(qid, {})[pid] = g
    return qrels


def save_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for qid in sorted(qrels):
            for pid in sorted(qrels[qid]):
                f.write(f"{qid} 0 {pid} {qrels[qid][pid]}\n")
