import json
from pathlib import Path

import pytest

from driftbench.cli import run
from driftbench.core import read_jsonl, split_header
from driftbench.llm import AuditLog, CaseInput, EndpointConfig, judge_cases
from driftbench.pca import PcaModel


@pytest.fixture(scope="module")
def scored(small_benchmark, tmp_path_factory):
    """Manifest, embeddings, scores and threshold predictions for the small benchmark."""
    d = tmp_path_factory.mktemp("cli")
    manifest = Path(small_benchmark.root) / "manifest.jsonl"
    assert run(["embed", "--manifest", str(manifest), "--out", str(d / "emb.jsonl")]) == 0
    assert run(["detect", "--embeddings", str(d / "emb.jsonl"), "--tau", "0.9",
                "--out", str(d / "scores.jsonl"), "--predictions", str(d / "thr.jsonl")]) == 0
    return manifest, d


def _fixture_for(scores_path, out, rule_responder, batch_size=16):
    """Record replies from the scripted responder as a replay file."""
    _, body = split_header(read_jsonl(scores_path))
    cases = [CaseInput(r["sample_id"], (r["sim_12"], r["sim_23"])) for r in body]
    judge_cases(cases, EndpointConfig(batch_size=batch_size), rule_responder(0.9), AuditLog(out),
                encoder="mfcc13-pooled", parallel=False)
    return out


def test_unknown_flag_exits_1_and_names_it(capsys):
    assert run(["detect", "--embeddings", "x", "--out", "y", "--bogus-flag"]) == 1
    assert "--bogus-flag" in capsys.readouterr().err


def test_missing_input_exits_1_and_names_flag(tmp_path, caplog):
    assert run(["evaluate", "--predictions", str(tmp_path / "nope.jsonl"),
                "--manifest", str(tmp_path / "m.jsonl"), "--out", str(tmp_path / "r.jsonl")]) == 1
    assert "--predictions" in caplog.text


def test_invalid_counts_exit_1(toy_pool_dir, tmp_path):
    assert run(["synth", "--pool", str(toy_pool_dir), "--out", str(tmp_path), "--counts", "1,2"]) == 1


def test_embed_scores_and_headers(scored):
    _, d = scored
    header, body = split_header(read_jsonl(d / "scores.jsonl"))
    assert len(body) == 16 and {"config_hash", "seed"} <= set(header)
    header, body = split_header(read_jsonl(d / "thr.jsonl"))
    assert header["tau"] == 0.9 and header["seed"] == 3
    for r in body:
        assert r["prediction"] in (0, 1)


def test_sweep_and_figures(scored):
    manifest, d = scored
    assert run(["detect", "sweep", "--scores", str(d / "scores.jsonl"), "--manifest", str(manifest),
                "--grid", "0.80:0.999:0.001", "--fixed-tau", "0.9", "--out", str(d / "sweep.jsonl"),
                "--figures"]) == 0
    text = (d / "sweep.txt").read_text()
    assert text.startswith("# config_hash=") and "best tau" in text and "fixed tau 0.9000" in text
    assert (d / "sweep.png").stat().st_size > 0 and (d / "sweep_min_similarity.png").exists()
    assert len(read_jsonl(d / "sweep.jsonl")) == 201


def test_pca_vectors(scored):
    _, d = scored
    assert run(["pca", "--embeddings", str(d / "emb.jsonl"), "--k", "8", "--out", str(d / "pca8.jsonl")]) == 0
    header, body = split_header(read_jsonl(d / "pca8.jsonl"))
    assert header["k"] == 8 and len(body) == 16 and all(len(r["vector"]) == 24 for r in body)
    model_text = (d / "pca8.model.txt").read_text()
    assert model_text.startswith("# config_hash=") and PcaModel.load(d / "pca8.model.txt").k == 8


def test_judge_evaluate_compare_offline(scored, rule_responder, tmp_path):
    manifest, d = scored
    fixture = _fixture_for(d / "scores.jsonl", tmp_path / "fixture.jsonl", rule_responder)
    out = tmp_path / "judge.jsonl"
    assert run(["judge", "--scores", str(d / "scores.jsonl"), "--mode", "cosine",
                "--fixture", str(fixture), "--out", str(out)]) == 0
    header, body = split_header(read_jsonl(out))
    assert header["input_mode"] == "cosine" and all(r["status"] == "ok" for r in body)
    assert (tmp_path / "judge.audit.jsonl").exists() and (tmp_path / "judge.verdicts.jsonl").exists()

    assert run(["evaluate", "--predictions", str(out), "--manifest", str(manifest),
                "--scores", str(d / "scores.jsonl"), "--out", str(tmp_path / "judge.report.jsonl"),
                "--figures"]) == 0
    assert run(["evaluate", "--predictions", str(d / "thr.jsonl"), "--manifest", str(manifest),
                "--out", str(tmp_path / "thr.report.jsonl")]) == 0
    # the scripted judge applies the same rule as the 0.9 threshold run
    judge_rep = split_header(read_jsonl(tmp_path / "judge.report.jsonl"))[1][0]
    thr_rep = split_header(read_jsonl(tmp_path / "thr.report.jsonl"))[1][0]
    assert judge_rep["f1"] == thr_rep["f1"] and judge_rep["excluded"] == 0

    assert run(["compare", "--reports", str(tmp_path / "judge.report.jsonl"), str(tmp_path / "thr.report.jsonl"),
                "--out", str(tmp_path / "cmp.jsonl"), "--figures"]) == 0
    table = (tmp_path / "cmp.txt").read_text()
    assert "Cosine Scores" in table and "Fixed threshold (0.9)" in table
    assert (tmp_path / "cmp.png").exists()
    for name in ("judge.audit.jsonl", "judge.verdicts.jsonl", "judge.report.jsonl", "cmp.jsonl"):
        header = read_jsonl(tmp_path / name)[0]
        assert header["type"] == "header" and header["seed"] in (3, "3") and header["config_hash"]


def test_judge_without_token_exits_2(scored, tmp_path, monkeypatch):
    _, d = scored
    monkeypatch.delenv("DRIFTBENCH_TEST_TOKEN", raising=False)
    (tmp_path / "ep.ini").write_text("[endpoint]\nbase_url = http://127.0.0.1:9/v1\n"
                                     "token_env = DRIFTBENCH_TEST_TOKEN\n")
    assert run(["judge", "--scores", str(d / "scores.jsonl"), "--endpoint-config", str(tmp_path / "ep.ini"),
                "--out", str(tmp_path / "j.jsonl")]) == 2


def test_judge_unreachable_endpoint_exits_2(scored, tmp_path, monkeypatch):
    _, d = scored
    monkeypatch.setenv("DRIFTBENCH_TEST_TOKEN", "x")
    (tmp_path / "ep.ini").write_text("[endpoint]\nbase_url = http://127.0.0.1:9/v1\n"
                                     "token_env = DRIFTBENCH_TEST_TOKEN\nmax_attempts = 1\ntimeout_s = 2\n")
    assert run(["judge", "--scores", str(d / "scores.jsonl"), "--endpoint-config", str(tmp_path / "ep.ini"),
                "--out", str(tmp_path / "j.jsonl")]) == 2


def test_pca_mode_fewshot_needs_shots_file(scored, tmp_path):
    _, d = scored
    run(["pca", "--embeddings", str(d / "emb.jsonl"), "--k", "8", "--out", str(tmp_path / "p.jsonl")])
    assert run(["judge", "--scores", str(tmp_path / "p.jsonl"), "--mode", "pca", "--shots", "4",
                "--fixture", str(tmp_path / "p.jsonl"), "--out", str(tmp_path / "j.jsonl")]) == 1


def test_simulate_bound_table(tmp_path):
    out = tmp_path / "bound.jsonl"
    assert run(["simulate-bound", "--mu0", "0.95", "--mu-prime", "0.80", "--sweep-sigmas", "0.03,0.05",
                "--sweep-taus", "0.85,0.875,0.9", "--trials", "20000", "--seed", "1", "--out", str(out),
                "--figures"]) == 0
    header, body = split_header(read_jsonl(out))
    assert header["seed"] == 1 and len(body) == 6
    text = (tmp_path / "bound.txt").read_text()
    assert "total_bnd" in text and "slope" in text and (tmp_path / "bound.png").exists()


def test_synth_header_and_figure(toy_pool_dir, tmp_path):
    assert run(["synth", "--pool", str(toy_pool_dir), "--out", str(tmp_path / "b"), "--counts", "1,1,1,1",
                "--seed", "2", "--figures"]) == 0
    assert (tmp_path / "b" / "morph_example.png").exists()
    header = read_jsonl(tmp_path / "b" / "manifest.jsonl")[0]
    assert header["seed"] == 2 and "config_hash" in header and header["full_benchmark"] is True


def _pipeline_config(tmp_path, toy_pool_dir, fixture=None, tau="0.90"):
    text = (f"[pipeline]\nworkdir = run\nseed = 3\n[synth]\npool = {toy_pool_dir}\ncounts = 4,4,4,4\n"
            f"[embed]\nencoder = mfcc\n[detect]\ntau = {tau}\n[pca]\nk = 8\n")
    if fixture:
        text += f"[judge]\nfixture = {fixture}\nmodes = cosine\nshots = 0\n"
    (tmp_path / "cfg.ini").write_text(text)
    return tmp_path / "cfg.ini"


def test_pipeline_skips_unchanged_stages(tmp_path, toy_pool_dir, rule_responder):
    from driftbench.pipeline import run_pipeline
    cfg = _pipeline_config(tmp_path, toy_pool_dir)
    first = run_pipeline(cfg)
    assert set(first.values()) == {"ran"}
    # record a judge fixture against the pipeline's own scores, then enable the judge stage
    fixture = _fixture_for(tmp_path / "run" / "scores.jsonl", tmp_path / "fx.jsonl", rule_responder)
    cfg = _pipeline_config(tmp_path, toy_pool_dir, fixture)
    second = run_pipeline(cfg)
    assert second == {"synth": "skipped", "embed": "skipped", "detect": "skipped", "pca8": "skipped",
                      "judge-cosine": "ran", "evaluate": "ran"}
    cfg = _pipeline_config(tmp_path, toy_pool_dir, fixture, tau="0.95")
    third = run_pipeline(cfg)
    assert third == {"synth": "skipped", "embed": "skipped", "detect": "ran", "pca8": "skipped",
                     "judge-cosine": "skipped", "evaluate": "ran"}
    _, rows = split_header(read_jsonl(tmp_path / "run" / "reports" / "comparison.jsonl"))
    assert {r["input_type"] for r in rows} == {"Cosine Scores", "Fixed threshold (0.95)"}
    state = json.loads((tmp_path / "run" / "pipeline_state.json").read_text())
    assert set(state) == set(third)


def test_pipeline_cli_propagates_stage_failure(tmp_path, toy_pool_dir):
    cfg = _pipeline_config(tmp_path, toy_pool_dir, fixture=tmp_path / "missing.jsonl")
    assert run(["pipeline", "--config", str(cfg)]) == 1



def test_pipeline_with_prebuilt_manifest(tmp_path, small_benchmark):
    from driftbench.pipeline import run_pipeline
    manifest = Path(small_benchmark.root) / "manifest.jsonl"
    (tmp_path / "cfg.ini").write_text(f"[pipeline]\nworkdir = run\n[synth]\nmanifest = {manifest}\n")
    assert run_pipeline(tmp_path / "cfg.ini") == {"embed": "ran", "detect": "ran", "evaluate": "ran"}
    assert not (tmp_path / "run" / "benchmark").exists()
