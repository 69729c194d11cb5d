"""Experiment orchestration: data generation, simulation, refinement,
retrieval, evaluation and the position-bias sweep.

Conditions are named (behavior, eta, algorithm, ann) tuples.  The default
grid is one raw-query baseline plus every combination of {rocchio, corocchio}
x {perfect, noisy} x {eta 0, 1}, each evaluated on the logged (seen) queries
and again on the unseen queries through the ANN variant.  All artifacts are
deterministic functions of the config and master seed; files are written via
a temp-then-rename so partial output never appears under the final name.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import clicks, metrics, refine, store, synth
from .errors import ClickDRError, ConfigError
from .rng import seed_derive

log = logging.getLogger("clickdr")


@dataclass(frozen=True)
class Condition:
    """One experimental cell."""

    name: str
    behavior: str = "perfect"   # ignored for the baseline
    eta: float = 0.0
    algorithm: Optional[str] = None  # None = raw-query baseline
    ann: bool = False           # evaluate on the unseen set via ANN refinement


@dataclass
class ExperimentConfig:
    synth: synth.SynthConfig = field(default_factory=synth.SynthConfig)
    feedback: refine.FeedbackConfig = field(default_factory=refine.FeedbackConfig)
    sessions_per_query: int = 1000
    serp_depth: int = 10
    eval_depth: int = 1000
    conditions: List[Condition] = field(default_factory=list)
    output_dir: str = "out"
    master_seed: int = 0

    def __post_init__(self):
        if self.eval_depth < self.serp_depth:
            raise ConfigError("eval_depth must be >= serp_depth")
        if self.sessions_per_query < 1 or self.serp_depth < 1:
            raise ConfigError("sessions_per_query and serp_depth must be >= 1")
        if not self.conditions:
            self.conditions = default_conditions()
        names = [c.name for c in self.conditions]
        if len(set(names)) != len(names):
            raise ConfigError("condition names must be unique")
        for c in self.conditions:
            if c.behavior not in ("perfect", "noisy"):
                raise ConfigError(f"condition {c.name!r}: unknown behavior {c.behavior!r}")
            if c.algorithm not in (None, "rocchio", "corocchio"):
                raise ConfigError(f"condition {c.name!r}: unknown algorithm {c.algorithm!r}")
            if c.eta < 0:
                raise ConfigError(f"condition {c.name!r}: eta must be >= 0")


def default_conditions() -> List[Condition]:
    conds = [Condition("baseline")]
    for behavior in ("perfect", "noisy"):
        for eta in (0.0, 1.0):
            for alg in ("rocchio", "corocchio"):
                base = f"{alg}-{behavior}-eta{eta:g}"
                conds.append(Condition(base, behavior, eta, alg, ann=False))
                conds.append(Condition(base + "-ann", behavior, eta, alg, ann=True))
    return conds


# --- flat key=value config files ---------------------------------------

def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(path) -> ExperimentConfig:
    """Parse a flat key=value config file with dotted keys.

    Example keys: synth.dim, feedback.alpha, sessions_per_query, seed,
    conditions (comma-separated names of the default grid, as a filter).
    """
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return config_from_values(values)


def config_from_values(values: Dict[str, str]) -> ExperimentConfig:
    synth_kwargs, feedback_kwargs, top = {}, {}, {}
    for key, raw in values.items():
        if key.startswith("synth."):
            name = key[len("synth."):]
            if name == "grade_mix":
                parts = [p for p in raw.split(",") if p]
                mix = {}
                for p in parts:
                    g, _, w = p.partition(":")
                    mix[int(g)] = float(w)
                synth_kwargs[name] = mix
            else:
                synth_kwargs[name] = _parse_scalar(raw)
        elif key.startswith("feedback."):
            feedback_kwargs[key[len("feedback."):]] = _parse_scalar(raw)
        else:
            top[key] = raw
    try:
        synth_cfg = synth.SynthConfig(**synth_kwargs)
        feedback_cfg = refine.FeedbackConfig(**feedback_kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    conditions = default_conditions()
    if "conditions" in top:
        wanted = [n for n in top.pop("conditions").split(",") if n]
        by_name = {c.name: c for c in conditions}
        missing = [n for n in wanted if n not in by_name]
        if missing:
            raise ConfigError(f"unknown condition names: {missing}")
        conditions = [by_name[n] for n in wanted]
    kwargs = dict(
        synth=synth_cfg,
        feedback=feedback_cfg,
        conditions=conditions,
    )
    for name, cast in (("sessions_per_query", int), ("serp_depth", int),
                       ("eval_depth", int), ("master_seed", int),
                       ("output_dir", str)):
        if name in top:
            try:
                kwargs[name] = cast(top.pop(name))
            except ValueError as e:
                raise ConfigError(f"bad value for {name}: {e}") from e
    if top:
        raise ConfigError(f"unknown config keys: {sorted(top)}")
    return ExperimentConfig(**kwargs)


# --- atomic file writing ------------------------------------------------

def atomic_write(path, writer) -> None:
    """Call writer(tmp_path), then rename tmp_path over path."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# --- pipeline pieces ----------------------------------------------------

@dataclass
class Workspace:
    """In-memory pipeline state shared by the stages."""

    pstore: store.EmbeddingStore
    seen: store.EmbeddingStore
    unseen: store.EmbeddingStore
    qrels: clicks.Qrels
    unseen_qrels: clicks.Qrels


def build_workspace(cfg: ExperimentConfig) -> Workspace:
    scfg = cfg.synth
    pstore, qstore, qrels = synth.gen_corpus(scfg)
    seen, unseen_base = synth.split_queries(qstore, scfg)
    unseen = synth.gen_unseen_queries(unseen_base, scfg.unseen_noise, scfg.seed)
    unseen_qrels = synth.derive_unseen_qrels(qrels, unseen)
    return Workspace(pstore, seen, unseen, qrels, unseen_qrels)


def log_seed(master_seed: int, behavior: str) -> int:
    # eta deliberately excluded: logs for different bias levels then share
    # their uniform draws, so click sets are nested across eta (common random
    # numbers) and cross-eta comparisons are not clouded by resampling noise.
    return seed_derive(master_seed, f"log:{behavior}", 0)


def build_log(ws: Workspace, cfg: ExperimentConfig, behavior: str, eta: float) -> clicks.ClickLog:
    model = clicks.UserModel(behavior, eta)
    return clicks.build_click_log(
        ws.pstore, ws.seen, ws.qrels, model,
        sessions_per_query=cfg.sessions_per_query, serp_depth=cfg.serp_depth,
        master_seed=log_seed(cfg.master_seed, behavior))


def condition_rankings(ws: Workspace, cfg: ExperimentConfig, cond: Condition,
                       click_log: Optional[clicks.ClickLog]) -> List[store.Ranking]:
    """Refined (or raw) retrieval for every evaluation query of a condition."""
    fcfg = cfg.feedback
    rankings = []
    if cond.algorithm is None:
        qstore = ws.unseen if cond.ann else ws.seen
        for qid in qstore.ids:
            rankings.append(store.top_k(ws.pstore, qstore.vector(qid),
                                        cfg.eval_depth, query_id=qid))
        return rankings
    fcfg = dataclasses.replace(fcfg, algorithm=cond.algorithm)
    if cond.ann:
        for qid in ws.unseen.ids:
            q = refine.feedback_ann(ws.unseen.vector(qid), ws.seen, click_log,
                                    ws.pstore, cond.eta, fcfg)
            rankings.append(store.top_k(ws.pstore, q, cfg.eval_depth, query_id=qid))
    else:
        for qid in ws.seen.ids:
            q = refine.refine_logged(ws.seen.vector(qid), click_log.sessions[qid],
                                     ws.pstore, cond.eta, fcfg)
            rankings.append(store.top_k(ws.pstore, q, cfg.eval_depth, query_id=qid))
    return rankings


def _write_inputs(ws: Workspace, cfg: ExperimentConfig, out: str) -> None:
    atomic_write(os.path.join(out, "passages.jsonl"),
                 lambda p: store.save_embeddings(ws.pstore, p))
    atomic_write(os.path.join(out, "queries_seen.jsonl"),
                 lambda p: store.save_embeddings(ws.seen, p))
    atomic_write(os.path.join(out, "queries_unseen.jsonl"),
                 lambda p: store.save_embeddings(ws.unseen, p))
    atomic_write(os.path.join(out, "qrels.txt"),
                 lambda p: clicks.save_qrels(ws.qrels, p))
    atomic_write(os.path.join(out, "qrels_unseen.txt"),
                 lambda p: clicks.save_qrels(ws.unseen_qrels, p))
    atomic_write(os.path.join(out, "manifest.json"),
                 lambda p: synth.save_manifest(cfg.synth, p))


def run_experiment(cfg: ExperimentConfig, only: Optional[str] = None) -> List[str]:
    """Run the condition grid end to end; returns the names of failed
    conditions (empty on full success).

    Artifacts under cfg.output_dir: input embeddings and qrels, one click log
    per (behavior, eta), one run file and metrics CSV per condition, and a
    significance matrix over the standard comparisons.
    """
    ws = build_workspace(cfg)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    _write_inputs(ws, cfg, out)

    conds = [c for c in cfg.conditions if only is None or c.name == only]
    if only is not None and not conds:
        raise ConfigError(f"no condition named {only!r}")

    logs: Dict[Tuple[str, float], clicks.ClickLog] = {}
    reports: Dict[str, metrics.MetricReport] = {}
    failed: List[str] = []
    for cond in conds:
        try:
            click_log = None
            if cond.algorithm is not None:
                key = (cond.behavior, cond.eta)
                if key not in logs:
                    logs[key] = build_log(ws, cfg, cond.behavior, cond.eta)
                    atomic_write(
                        os.path.join(out, "logs", f"{cond.behavior}-eta{cond.eta:g}.jsonl"),
                        lambda p, lg=logs[key]: clicks.save_click_log(lg, p))
                click_log = logs[key]
            rankings = condition_rankings(ws, cfg, cond, click_log)
            qrels = ws.unseen_qrels if cond.ann else ws.qrels
            report = metrics.evaluate_rankings(rankings, qrels)
            reports[cond.name] = report
            atomic_write(os.path.join(out, "runs", f"{cond.name}.run"),
                         lambda p: metrics.save_run(rankings, p, tag=cond.name))
            atomic_write(os.path.join(out, "metrics", f"{cond.name}.csv"),
                         lambda p: metrics.save_report_csv(report, p))
        except ClickDRError as e:
            log.error("condition %s failed: %s", cond.name, e)
            failed.append(cond.name)
    if only is None and len(reports) > 1:
        atomic_write(os.path.join(out, "significance.csv"),
                     lambda p: _write_significance(reports, p))
    return failed


def _comparison_pairs(names: Sequence[str]) -> List[Tuple[str, str]]:
    pairs = []
    baseline = "baseline" if "baseline" in names else None
    for name in names:
        if baseline and name != baseline:
            pairs.append((name, baseline))
        if name.startswith("corocchio-"):
            sibling = "rocchio-" + name[len("corocchio-"):]
            if sibling in names:
                pairs.append((name, sibling))
    return pairs


def _write_significance(reports: Dict[str, metrics.MetricReport], path) -> None:
    """Paired t-tests (Bonferroni over all emitted comparisons) on nDCG@10."""
    names = list(reports)
    pairs = [(a, b) for a, b in _comparison_pairs(names)
             if set(reports[a].per_query) == set(reports[b].per_query)]
    n_comparisons = max(1, len(pairs))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("method,reference,metric,mean_diff,t,p_raw,p_adjusted,significant\n")
        for a, b in pairs:
            qids = sorted(reports[a].per_query)
            sa = [reports[a].per_query[q]["ndcg@10"] for q in qids]
            sb = [reports[b].per_query[q]["ndcg@10"] for q in qids]
            t, p_raw, p_adj, sig = metrics.paired_t_test(sa, sb, n_comparisons)
            diff = float(np.mean(sa) - np.mean(sb))
            f.write(f"{a},{b},ndcg@10,{diff:.6f},{t:.6f},{p_raw:.6g},"
                    f"{p_adj:.6g},{int(sig)}\n")


# --- stage-wise entry points -------------------------------------------
# Each stage round-trips through the on-disk formats so it can be re-run in
# isolation after an upstream stage has produced its files.

def _log_path(out: str, behavior: str, eta: float) -> str:
    return os.path.join(out, "logs", f"{behavior}-eta{eta:g}.jsonl")


def _distinct_user_models(cfg: ExperimentConfig) -> List[Tuple[str, float]]:
    seen = []
    for c in cfg.conditions:
        if c.algorithm is not None and (c.behavior, c.eta) not in seen:
            seen.append((c.behavior, c.eta))
    return seen


def stage_gen(cfg: ExperimentConfig) -> None:
    ws = build_workspace(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_inputs(ws, cfg, cfg.output_dir)


def _load_stage_inputs(cfg: ExperimentConfig) -> Workspace:
    out = cfg.output_dir
    pstore = store.load_embeddings(os.path.join(out, "passages.jsonl"))
    seen = store.load_embeddings(os.path.join(out, "queries_seen.jsonl"),
                                 kind="query-store")
    unseen = store.load_embeddings(os.path.join(out, "queries_unseen.jsonl"),
                                   kind="query-store")
    qrels = clicks.load_qrels(os.path.join(out, "qrels.txt"))
    unseen_qrels = clicks.load_qrels(os.path.join(out, "qrels_unseen.txt"))
    return Workspace(pstore, seen, unseen, qrels, unseen_qrels)


def stage_simulate(cfg: ExperimentConfig, only: Optional[str] = None) -> None:
    ws = _load_stage_inputs(cfg)
    conds = [c for c in cfg.conditions if only is None or c.name == only]
    done = set()
    for behavior, eta in _distinct_user_models(
            dataclasses.replace(cfg, conditions=conds or cfg.conditions)):
        if (behavior, eta) in done:
            continue
        done.add((behavior, eta))
        click_log = build_log(ws, cfg, behavior, eta)
        atomic_write(_log_path(cfg.output_dir, behavior, eta),
                     lambda p: clicks.save_click_log(click_log, p))


def stage_refine(cfg: ExperimentConfig, only: Optional[str] = None) -> None:
    """Write refined query vectors per feedback condition as JSONL stores."""
    ws = _load_stage_inputs(cfg)
    for cond in cfg.conditions:
        if only is not None and cond.name != only:
            continue
        if cond.algorithm is None:
            continue
        click_log = clicks.load_click_log(
            _log_path(cfg.output_dir, cond.behavior, cond.eta))
        fcfg = dataclasses.replace(cfg.feedback, algorithm=cond.algorithm)
        qstore = ws.unseen if cond.ann else ws.seen
        ids, rows = [], []
        for qid in qstore.ids:
            if cond.ann:
                q = refine.feedback_ann(qstore.vector(qid), ws.seen, click_log,
                                        ws.pstore, cond.eta, fcfg)
            else:
                q = refine.refine_logged(qstore.vector(qid),
                                         click_log.sessions[qid],
                                         ws.pstore, cond.eta, fcfg)
            ids.append(qid)
            rows.append(q)
        refined = store.EmbeddingStore(ids, np.stack(rows), kind="query-store")
        atomic_write(os.path.join(cfg.output_dir, "refined", f"{cond.name}.jsonl"),
                     lambda p: store.save_embeddings(refined, p))


def stage_retrieve(cfg: ExperimentConfig, only: Optional[str] = None) -> None:
    ws = _load_stage_inputs(cfg)
    for cond in cfg.conditions:
        if only is not None and cond.name != only:
            continue
        if cond.algorithm is None:
            qstore = ws.unseen if cond.ann else ws.seen
        else:
            qstore = store.load_embeddings(
                os.path.join(cfg.output_dir, "refined", f"{cond.name}.jsonl"),
                kind="query-store")
        rankings = [store.top_k(ws.pstore, qstore.vector(qid), cfg.eval_depth,
                                query_id=qid)
                    for qid in qstore.ids]
        atomic_write(os.path.join(cfg.output_dir, "runs", f"{cond.name}.run"),
                     lambda p: metrics.save_run(rankings, p, tag=cond.name))


def stage_evaluate(cfg: ExperimentConfig, only: Optional[str] = None) -> None:
    out = cfg.output_dir
    qrels = clicks.load_qrels(os.path.join(out, "qrels.txt"))
    unseen_qrels = clicks.load_qrels(os.path.join(out, "qrels_unseen.txt"))
    reports: Dict[str, metrics.MetricReport] = {}
    for cond in cfg.conditions:
        if only is not None and cond.name != only:
            continue
        rankings = metrics.load_run(os.path.join(out, "runs", f"{cond.name}.run"))
        report = metrics.evaluate_rankings(
            rankings, unseen_qrels if cond.ann else qrels)
        reports[cond.name] = report
        atomic_write(os.path.join(out, "metrics", f"{cond.name}.csv"),
                     lambda p: metrics.save_report_csv(report, p))
    if only is None and len(reports) > 1:
        atomic_write(os.path.join(out, "significance.csv"),
                     lambda p: _write_significance(reports, p))


def sweep_eta(cfg: ExperimentConfig, etas: Sequence[float],
              out_path: Optional[str] = None) -> List[Tuple[float, str, str, float]]:
    """Mean nDCG@10 of rocchio and corocchio on the seen set, per user
    behavior and position-bias level.  Returns (eta, condition, metric, mean)
    rows and optionally writes them as CSV."""
    if not etas:
        raise ConfigError("etas must be non-empty")
    if any(e < 0 for e in etas):
        raise ConfigError("etas must be >= 0")
    ws = build_workspace(cfg)
    rows: List[Tuple[float, str, str, float]] = []
    for eta in etas:
        for behavior in ("perfect", "noisy"):
            click_log = build_log(ws, cfg, behavior, eta)
            for alg in ("rocchio", "corocchio"):
                cond = Condition(f"{alg}-{behavior}", behavior, eta, alg)
                rankings = condition_rankings(ws, cfg, cond, click_log)
                report = metrics.evaluate_rankings(rankings, ws.qrels)
                rows.append((eta, f"{alg}-{behavior}", "ndcg@10",
                             report.means["ndcg@10"]))
    if out_path:
        def write(p):
            with open(p, "w", encoding="utf-8", newline="\n") as f:
                f.write("eta,condition,metric,mean\n")
                for eta, cond_name, metric, mean in rows:
                    f.write(f"{eta:g},{cond_name},{metric},{mean:.6f}\n")
        atomic_write(out_path, write)
    return rows
