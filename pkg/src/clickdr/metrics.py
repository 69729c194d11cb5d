"""Ranking-quality metrics, run-file I/O and paired significance testing.

nDCG uses the graded labels with the 2^grade - 1 gain and log2(rank + 1)
discount; MAP and Recall operate on binarized judgments where grade 1 is
relabeled to non-relevant.  Unjudged retrieved passages count as grade 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from .clicks import Qrels
from .errors import IngestError, StatError
from .store import Ranking

EVAL_DEPTH_CAP = 1000  # MAP denominator cap: relevant beyond this depth are unreachable

METRIC_KEYS = ("ndcg@10", "ndcg@100", "recall@1000", "map")


def ndcg_at_k(ranking: Ranking, qrels: Qrels, k: int) -> float:
    """Graded nDCG at cutoff k; 0 when the query has no positive grade."""
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = qrels.get(ranking.query_id, {})
    dcg = 0.0
    for i, pid in enumerate(ranking.passage_ids[:k], start=1):
        g = judged.get(pid, 0)
        dcg += (2 ** g - 1) / math.log2(i + 1)
    ideal = sorted(judged.values(), reverse=True)[:k]
    idcg = sum((2 ** g - 1) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg if idcg > 0 else 0.0


def binary_relabel(qrels: Qrels) -> Qrels:
    """Grades 2 and 3 become 1; grades 0 and 1 become 0."""
    return {qid: {pid: (1 if g >= 2 else 0) for pid, g in judged.items()}
            for qid, judged in qrels.items()}


def average_precision(ranking: Ranking, binary_qrels: Qrels) -> float:
    """MAP contribution for one query over binarized judgments."""
    judged = binary_qrels.get(ranking.query_id, {})
    n_relevant = min(sum(judged.values()), EVAL_DEPTH_CAP)
    if n_relevant == 0:
        return 0.0
    hits = 0
    total = 0.0
    for i, pid in enumerate(ranking.passage_ids[:EVAL_DEPTH_CAP], start=1):
        if judged.get(pid, 0) == 1:
            hits += 1
            total += hits / i
    return total / n_relevant


def recall_at_k(ranking: Ranking, binary_qrels: Qrels, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = binary_qrels.get(ranking.query_id, {})
    n_relevant = sum(judged.values())
    if n_relevant == 0:
        return 0.0
    found = sum(1 for pid in ranking.passage_ids[:k] if judged.get(pid, 0) == 1)
    return found / n_relevant


@dataclass
class MetricReport:
    """Per-query metric values plus their mean over queries."""

    per_query: Dict[str, Dict[str, float]]
    means: Dict[str, float]


def _evaluate_one(ranking: Ranking, judged: Dict[str, int]) -> Dict[str, float]:
    # Single pass over the ranking; must agree exactly with the individual
    # metric functions (asserted in the test suite).
    total_relevant = sum(1 for g in judged.values() if g >= 2)
    ap_denom = min(total_relevant, EVAL_DEPTH_CAP)
    dcg10 = dcg100 = 0.0
    hits = 0
    ap_total = 0.0
    for i, pid in enumerate(ranking.passage_ids[:EVAL_DEPTH_CAP], start=1):
        g = judged.get(pid, 0)
        if g > 0 and i <= 100:
            gain = (2 ** g - 1) / math.log2(i + 1)
            dcg100 += gain
            if i <= 10:
                dcg10 += gain
        if g >= 2:
            hits += 1
            ap_total += hits / i
    ideal = sorted(judged.values(), reverse=True)
    idcg10 = sum((2 ** g - 1) / math.log2(i + 1) for i, g in enumerate(ideal[:10], start=1))
    idcg100 = sum((2 ** g - 1) / math.log2(i + 1) for i, g in enumerate(ideal[:100], start=1))
    return {
        "ndcg@10": dcg10 / idcg10 if idcg10 > 0 else 0.0,
        "ndcg@100": dcg100 / idcg100 if idcg100 > 0 else 0.0,
        "recall@1000": hits / total_relevant if total_relevant else 0.0,
        "map": ap_total / ap_denom if ap_denom else 0.0,
    }


def evaluate_rankings(rankings: Sequence[Ranking], qrels: Qrels) -> MetricReport:
    per_query: Dict[str, Dict[str, float]] = {}
    for r in rankings:
        per_query[r.query_id] = _evaluate_one(r, qrels.get(r.query_id, {}))
    n = len(per_query)
    means = {m: (sum(v[m] for v in per_query.values()) / n if n else 0.0)
             for m in METRIC_KEYS}
    return MetricReport(per_query, means)


def paired_t_test(a: Sequence[float], b: Sequence[float],
                  comparisons: int = 1) -> Tuple[float, float, float, bool]:
    """Two-tailed paired t-test with a Bonferroni-adjusted p value.

    Returns (t, p_raw, p_adjusted, significant_at_0.05).  Conventions for
    degenerate inputs: all-zero differences give t=0, p=1; zero-variance
    nonzero-mean differences give t=+/-inf, p=0.
    """
    if len(a) != len(b):
        raise StatError("score lists are not aligned")
    n = len(a)
    if n < 2:
        raise StatError("need at least 2 paired observations")
    diffs = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if np.all(diffs == 0.0):
        t, p = 0.0, 1.0
    elif np.all(diffs == diffs[0]):
        t = math.inf if diffs[0] > 0 else -math.inf
        p = 0.0
    else:
        res = stats.ttest_rel(np.asarray(a, dtype=np.float64),
                              np.asarray(b, dtype=np.float64))
        t, p = float(res.statistic), float(res.pvalue)
    if comparisons < 1:
        raise StatError("comparisons must be >= 1")
    p_adj = min(1.0, p * comparisons)
    return t, p, p_adj, p_adj < 0.05


# --- TREC-format I/O ----------------------------------------------------

def save_run(rankings: Sequence[Ranking], path, tag: str = "clickdr") -> None:
    """Write rankings in TREC run format: qid Q0 pid rank score tag."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rankings:
            # .17g keeps the float exact on round-trip, so rounding cannot
            # manufacture score ties that violate the id tie-break order
            f.writelines(f"{r.query_id} Q0 {pid} {rank} {score:.17g} {tag}\n"
                         for rank, (pid, score) in enumerate(r.items, start=1))


def load_run(path) -> List[Ranking]:
    """Read a TREC run file back into validated Rankings."""
    per_query: Dict[str, List[Tuple[int, str, float]]] = {}
    order: List[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise IngestError(f"run line {lineno}: expected 6 fields")
            qid, _, pid, rank, score, _tag = parts
            try:
                entry = (int(rank), pid, float(score))
            except ValueError as e:
                raise IngestError(f"run line {lineno}: {e}") from e
            if qid not in per_query:
                per_query[qid] = []
                order.append(qid)
            per_query[qid].append(entry)
    rankings = []
    for qid in order:
        entries = sorted(per_query[qid])
        ranks = [r for r, _, _ in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise IngestError(f"query {qid!r}: ranks are not contiguous from 1")
        scores = [s for _, _, s in entries]
        if any(s2 > s1 for s1, s2 in zip(scores, scores[1:])):
            raise IngestError(f"query {qid!r}: scores increase with rank")
        items = [(pid, s) for _, pid, s in entries]
        try:
            rankings.append(Ranking(qid, items, depth=len(items)))
        except ValueError as e:
            raise IngestError(f"query {qid!r}: {e}") from e
    return rankings


def save_report_csv(report: MetricReport, path) -> None:
    """Long-form CSV: metric,query_id,value plus a `mean` pseudo-query row."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("metric,query_id,value\n")
        for metric in METRIC_KEYS:
            for qid in sorted(report.per_query):
                f.write(f"{metric},{qid},{report.per_query[qid][metric]:.6f}\n")
            f.write(f"{metric},mean,{report.means[metric]:.6f}\n")
