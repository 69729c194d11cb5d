"""Tests for the experiment harness: config parsing, pipeline stages,
artifact determinism and the CLI."""

import dataclasses
import os

import numpy as np
import pytest

from clickdr import cli
from clickdr import experiment as ex
from clickdr import metrics, synth
from clickdr.errors import ConfigError


def tiny_config(out_dir, **overrides):
    scfg = synth.SynthConfig(dim=8, n_queries=12, passages_per_query=4,
                             distractor_count=40, queries_per_cluster=3,
                             seed=2)
    kwargs = dict(synth=scfg, sessions_per_query=25, serp_depth=5,
                  eval_depth=30, output_dir=str(out_dir), master_seed=1)
    kwargs.update(overrides)
    return ex.ExperimentConfig(**kwargs)


def read_tree(root):
    """Map of relative path -> file bytes for a directory tree."""
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            full = os.path.join(dirpath, name)
            out[os.path.relpath(full, root)] = open(full, "rb").read()
    return out


# --- conditions and config ----------------------------------------------

def test_default_grid_has_17_conditions():
    conds = ex.default_conditions()
    assert len(conds) == 17
    names = [c.name for c in conds]
    assert names[0] == "baseline"
    assert "corocchio-noisy-eta1-ann" in names
    assert sum(1 for c in conds if c.ann) == 8


def test_config_validation():
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(serp_depth=100, eval_depth=10)
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(conditions=[ex.Condition("a"), ex.Condition("a")])
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(conditions=[ex.Condition("a", behavior="rushed")])
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(conditions=[ex.Condition("a", algorithm="bm25")])


def test_parse_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# a comment\n"
        "\n"
        "synth.dim=16\n"
        "synth.n_queries=20\n"
        "synth.grade_mix=0:0.5,2:0.25,3:0.25\n"
        "feedback.alpha=0.3\n"
        "sessions_per_query=10\n"
        "master_seed=9\n"
        "output_dir=somewhere\n"
        "conditions=baseline,rocchio-perfect-eta1\n")
    cfg = ex.parse_config(path)
    assert cfg.synth.dim == 16
    assert cfg.synth.grade_mix == {0: 0.5, 2: 0.25, 3: 0.25}
    assert cfg.feedback.alpha == 0.3
    assert cfg.sessions_per_query == 10
    assert cfg.master_seed == 9
    assert cfg.output_dir == "somewhere"
    assert [c.name for c in cfg.conditions] == ["baseline", "rocchio-perfect-eta1"]


def test_parse_config_unknown_key(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("wat=1\n")
    with pytest.raises(ConfigError):
        ex.parse_config(path)


def test_parse_config_unknown_condition(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("conditions=baseline,unheard-of\n")
    with pytest.raises(ConfigError):
        ex.parse_config(path)


def test_parse_config_bad_line(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("no equals sign here\n")
    with pytest.raises(ConfigError):
        ex.parse_config(path)


def test_parse_config_bad_synth_field(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("synth.imaginary=3\n")
    with pytest.raises(ConfigError):
        ex.parse_config(path)


# --- run_experiment ------------------------------------------------------

def test_single_baseline_condition_artifacts(tmp_path):
    cfg = tiny_config(tmp_path / "out",
                      conditions=[ex.Condition("baseline")])
    failed = ex.run_experiment(cfg)
    assert failed == []
    assert os.listdir(tmp_path / "out" / "runs") == ["baseline.run"]
    assert os.listdir(tmp_path / "out" / "metrics") == ["baseline.csv"]
    assert not os.path.exists(tmp_path / "out" / "significance.csv")


def test_run_experiment_emits_full_grid(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    assert ex.run_experiment(cfg) == []
    out = tmp_path / "out"
    assert len(os.listdir(out / "runs")) == 17
    assert len(os.listdir(out / "metrics")) == 17
    # one log per distinct (behavior, eta) with at least one feedback condition
    assert sorted(os.listdir(out / "logs")) == [
        "noisy-eta0.jsonl", "noisy-eta1.jsonl",
        "perfect-eta0.jsonl", "perfect-eta1.jsonl"]
    assert (out / "significance.csv").exists()
    assert (out / "manifest.json").exists()


def test_run_experiment_is_deterministic(tmp_path):
    cfg_a = tiny_config(tmp_path / "a")
    cfg_b = tiny_config(tmp_path / "b")
    ex.run_experiment(cfg_a)
    ex.run_experiment(cfg_b)
    tree_a = read_tree(tmp_path / "a")
    tree_b = read_tree(tmp_path / "b")
    assert tree_a.keys() == tree_b.keys()
    for rel in tree_a:
        assert tree_a[rel] == tree_b[rel], f"{rel} differs between runs"


def test_rerunning_one_condition_reproduces_artifacts(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    ex.run_experiment(cfg)
    name = "corocchio-perfect-eta1"
    run_path = tmp_path / "out" / "runs" / f"{name}.run"
    before = run_path.read_bytes()
    ex.run_experiment(cfg, only=name)
    assert run_path.read_bytes() == before


def test_run_experiment_unknown_condition_filter(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    with pytest.raises(ConfigError):
        ex.run_experiment(cfg, only="nope")


def test_failed_condition_does_not_abort_others(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path / "out")
    real = ex.condition_rankings

    def sabotage(ws, cfg_, cond, click_log):
        if cond.name == "rocchio-noisy-eta1":
            raise ConfigError("injected failure")
        return real(ws, cfg_, cond, click_log)

    monkeypatch.setattr(ex, "condition_rankings", sabotage)
    failed = ex.run_experiment(cfg)
    assert failed == ["rocchio-noisy-eta1"]
    assert len(os.listdir(tmp_path / "out" / "runs")) == 16


def test_significance_file_contents(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    ex.run_experiment(cfg)
    lines = (tmp_path / "out" / "significance.csv").read_text().splitlines()
    assert lines[0] == "method,reference,metric,mean_diff,t,p_raw,p_adjusted,significant"
    body = [l.split(",") for l in lines[1:]]
    # every seen-set condition is compared against the baseline, and each
    # corocchio condition against its rocchio sibling
    refs = {row[1] for row in body}
    assert "baseline" in refs
    assert any(row[0].startswith("corocchio-") and row[1].startswith("rocchio-")
               for row in body)
    assert all(row[2] == "ndcg@10" for row in body)


# --- stage pipeline ------------------------------------------------------

def test_stages_reproduce_run_all(tmp_path):
    staged = tiny_config(tmp_path / "staged")
    direct = tiny_config(tmp_path / "direct")
    ex.stage_gen(staged)
    ex.stage_simulate(staged)
    ex.stage_refine(staged)
    ex.stage_retrieve(staged)
    ex.stage_evaluate(staged)
    ex.run_experiment(direct)
    for rel in ("runs/baseline.run", "runs/corocchio-noisy-eta1.run",
                "runs/rocchio-perfect-eta1-ann.run",
                "metrics/corocchio-perfect-eta0.csv", "significance.csv"):
        a = (tmp_path / "staged" / rel).read_bytes()
        b = (tmp_path / "direct" / rel).read_bytes()
        assert a == b, f"{rel} differs between staged and direct pipeline"


def test_stage_refine_writes_one_store_per_feedback_condition(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    ex.stage_gen(cfg)
    ex.stage_simulate(cfg)
    ex.stage_refine(cfg)
    refined = sorted(os.listdir(tmp_path / "out" / "refined"))
    expected = sorted(f"{c.name}.jsonl" for c in cfg.conditions
                      if c.algorithm is not None)
    assert refined == expected


# --- eta sweep -----------------------------------------------------------

def test_sweep_eta_zero_identity(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    rows = ex.sweep_eta(cfg, [0.0])
    by_cond = {cond: mean for _, cond, _, mean in rows}
    assert by_cond["rocchio-perfect"] == by_cond["corocchio-perfect"]
    assert by_cond["rocchio-noisy"] == by_cond["corocchio-noisy"]


def test_sweep_eta_row_count_and_csv(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    out_csv = tmp_path / "sweep.csv"
    etas = [0.0, 1.0, 2.0]
    rows = ex.sweep_eta(cfg, etas, out_path=str(out_csv))
    assert len(rows) == len(etas) * 4
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "eta,condition,metric,mean"
    assert len(lines) == 1 + len(rows)


def test_sweep_eta_validation(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    with pytest.raises(ConfigError):
        ex.sweep_eta(cfg, [])
    with pytest.raises(ConfigError):
        ex.sweep_eta(cfg, [-1.0])


# --- atomic writes -------------------------------------------------------

def test_atomic_write_no_temp_left_behind(tmp_path):
    target = tmp_path / "sub" / "file.txt"
    ex.atomic_write(target, lambda p: open(p, "w").write("done"))
    assert target.read_text() == "done"
    assert os.listdir(tmp_path / "sub") == ["file.txt"]


def test_atomic_write_failure_leaves_no_file(tmp_path):
    target = tmp_path / "file.txt"

    def boom(p):
        raise RuntimeError("writer failed")

    with pytest.raises(RuntimeError):
        ex.atomic_write(target, boom)
    assert not target.exists()
    assert os.listdir(tmp_path) == []


# --- CLI -----------------------------------------------------------------

def write_tiny_cfg(tmp_path, out_dir):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "synth.dim=8\nsynth.n_queries=12\nsynth.passages_per_query=4\n"
        "synth.distractor_count=40\nsynth.queries_per_cluster=3\nsynth.seed=2\n"
        "sessions_per_query=25\nserp_depth=5\neval_depth=30\n"
        f"output_dir={out_dir}\nmaster_seed=1\n"
        "conditions=baseline,rocchio-perfect-eta1,corocchio-perfect-eta1\n")
    return path


def test_cli_run_all_and_overrides(tmp_path):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "ignored")
    out = tmp_path / "cli-out"
    rc = cli.main(["--config", str(cfg_path), "--out", str(out),
                   "--seed", "1", "run-all"])
    assert rc == 0
    assert sorted(os.listdir(out / "runs")) == [
        "baseline.run", "corocchio-perfect-eta1.run",
        "rocchio-perfect-eta1.run"]


def test_cli_condition_filter(tmp_path):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "out")
    rc = cli.main(["--config", str(cfg_path), "--condition", "baseline",
                   "run-all"])
    assert rc == 0
    assert os.listdir(tmp_path / "out" / "runs") == ["baseline.run"]


def test_cli_threads_flag_does_not_change_output(tmp_path):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "unused")
    out1, out2 = tmp_path / "t1", tmp_path / "t2"
    assert cli.main(["--config", str(cfg_path), "--out", str(out1),
                     "--threads", "1", "run-all"]) == 0
    assert cli.main(["--config", str(cfg_path), "--out", str(out2),
                     "--threads", "4", "run-all"]) == 0
    tree1, tree2 = read_tree(out1), read_tree(out2)
    assert tree1 == tree2


def test_cli_bad_config_exits_2(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("synth.dim=not-a-dim\n")
    assert cli.main(["--config", str(path), "run-all"]) == 2


def test_cli_missing_config_file_exits_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "absent.cfg"), "run-all"]) == 2


def test_cli_failed_condition_exits_1(tmp_path, monkeypatch):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "out")
    monkeypatch.setattr(ex, "run_experiment",
                        lambda cfg, only=None: ["rocchio-perfect-eta1"])
    assert cli.main(["--config", str(cfg_path), "run-all"]) == 1


def test_cli_sweep_eta(tmp_path):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "out")
    rc = cli.main(["--config", str(cfg_path), "sweep-eta", "--etas", "0,1"])
    assert rc == 0
    lines = (tmp_path / "out" / "sweep_eta.csv").read_text().splitlines()
    assert lines[0] == "eta,condition,metric,mean"
    assert len(lines) == 1 + 2 * 4


def test_cli_stage_sequence(tmp_path):
    cfg_path = write_tiny_cfg(tmp_path, tmp_path / "out")
    for command in ("gen", "simulate", "refine", "retrieve", "evaluate"):
        assert cli.main(["--config", str(cfg_path), command]) == 0
    assert len(os.listdir(tmp_path / "out" / "runs")) == 3
    assert len(os.listdir(tmp_path / "out" / "metrics")) == 3
