"""Config-driven end-to-end run with content-hash stage skipping.

Each stage is a list of CLI invocations plus the files it reads and writes.
A stage is skipped when the hash of its arguments and input file contents
matches the one recorded in ``pipeline_state.json`` and its outputs exist, so
changing only ``[detect] tau`` reruns detect and evaluate and nothing else.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .core import DriftBenchError

log = logging.getLogger("driftbench.pipeline")

STATE_FILE = "pipeline_state.json"


class StageFailed(DriftBenchError):
    def __init__(self, stage: str, code: int):
        super().__init__(f"stage {stage!r} failed with exit status {code}")
        self.stage = stage
        self.code = code


@dataclass
class Stage:
    name: str
    commands: list[list[str]]
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)

    def digest(self) -> str:
        h = hashlib.sha256(json.dumps(self.commands).encode())
        for p in self.inputs:
            files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
            for f in files:
                h.update(str(f.relative_to(p) if p.is_dir() else f.name).encode())
                h.update(f.read_bytes() if f.exists() else b"<missing>")
        return h.hexdigest()


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def plan_stages(cfg: configparser.ConfigParser, base: Path) -> tuple[Path, list[Stage]]:
    """Translate an INI config into ordered stages. Relative paths resolve against ``base``."""
    def path(section, key, fallback=None):
        value = cfg.get(section, key, fallback=fallback)
        return None if not value else (base / value).resolve()

    work = path("pipeline", "workdir", "driftbench-run")
    seed = cfg.get("pipeline", "seed", fallback="0")
    figures = cfg.getboolean("pipeline", "figures", fallback=False)
    fig = ["--figures"] if figures else []
    bench = work / "benchmark"
    manifest = path("synth", "manifest") or bench / "manifest.jsonl"
    emb = work / "embeddings.jsonl"
    scores = work / "scores.jsonl"
    thr_pred = work / "threshold.predictions.jsonl"
    sweep = work / "sweep.jsonl"
    stages: list[Stage] = []

    # a prebuilt manifest replaces the toy-pool and synth stages
    if path("synth", "manifest") is None:
        pool = path("synth", "pool")
        if pool is None:
            pool = work / "toy_pool"
            stages.append(Stage("toy-pool", [[
                "toy-pool", "--out", str(pool),
                "--speakers", cfg.get("synth", "toy_speakers", fallback="4"),
                "--clips", cfg.get("synth", "toy_clips", fallback="6"), "--seed", seed]], [], [pool]))
        synth = ["synth", "--pool", str(pool), "--out", str(bench), "--seed", seed,
                 "--counts", cfg.get("synth", "counts", fallback="32,32,32,32"),
                 "--silence-ms", cfg.get("synth", "silence_ms", fallback="500")] + fig
        stages.append(Stage("synth", [synth], [pool], [manifest]))

    embed = ["embed", "--manifest", str(manifest), "--out", str(emb),
             "--encoder", cfg.get("embed", "encoder", fallback="mfcc")]
    embed_inputs = [manifest]
    if imp := path("embed", "import_file"):
        embed += ["--import-file", str(imp)]
        embed_inputs.append(imp)
    stages.append(Stage("embed", [embed], embed_inputs, [emb]))

    tau = cfg.get("detect", "tau", fallback="0.90")
    stages.append(Stage("detect", [
        ["detect", "--embeddings", str(emb), "--tau", tau, "--out", str(scores),
         "--predictions", str(thr_pred)],
        ["detect", "sweep", "--scores", str(scores), "--manifest", str(manifest),
         "--grid", cfg.get("detect", "grid", fallback="0.80:0.999:0.001"),
         "--fixed-tau", tau, "--out", str(sweep)] + fig,
    ], [emb, manifest], [scores, thr_pred, sweep]))

    vectors = {}
    for k in _list(cfg.get("pca", "k", fallback="")):
        vectors[k] = work / f"pca{k}.jsonl"
        stages.append(Stage(f"pca{k}", [["pca", "--embeddings", str(emb), "--k", k,
                                          "--out", str(vectors[k])]], [emb], [vectors[k]]))

    pred_files = [thr_pred]
    if cfg.has_section("judge"):
        endpoint = path("judge", "endpoint_config")
        fixture = path("judge", "fixture")
        shots = cfg.get("judge", "shots", fallback="0")
        for mode in _list(cfg.get("judge", "modes", fallback="cosine")):
            if mode == "cosine":
                source, cli_mode = scores, "cosine"
            elif mode.startswith("pca") and mode[3:] in vectors:
                source, cli_mode = vectors[mode[3:]], "pca"
            else:
                raise DriftBenchError(f"[judge] modes: {mode!r} needs a matching [pca] k")
            out = work / f"judge_{mode}.jsonl"
            cmd = ["judge", "--scores", str(source), "--mode", cli_mode, "--shots", shots, "--out", str(out)]
            inputs = [source]
            for flag, p in (("--endpoint-config", endpoint), ("--fixture", fixture),
                            ("--shots-file", path("judge", "shots_file"))):
                if p:
                    cmd += [flag, str(p)]
                    inputs.append(p)
            stages.append(Stage(f"judge-{mode}", [cmd], inputs, [out]))
            pred_files.append(out)

    reports = [work / "reports" / (p.name.replace(".predictions", "").replace(".jsonl", "") + ".report.jsonl")
               for p in pred_files]
    comparison = work / "reports" / "comparison.jsonl"
    evaluate = [["evaluate", "--predictions", str(p), "--manifest", str(manifest), "--scores", str(scores),
                 "--out", str(r)] + fig for p, r in zip(pred_files, reports)]
    evaluate.append(["compare", "--reports", *map(str, reports), "--out", str(comparison)] + fig)
    stages.append(Stage("evaluate", evaluate, [manifest, scores, *pred_files], [*reports, comparison]))
    return work, stages


def run_pipeline(config_path: str | os.PathLike, force: bool = False) -> dict[str, str]:
    """Run every stage whose inputs changed; return ``{stage: "ran" | "skipped"}``."""
    from .cli import run

    config_path = Path(config_path)
    cfg = configparser.ConfigParser()
    cfg.read(config_path, encoding="utf-8")
    work, stages = plan_stages(cfg, config_path.resolve().parent)
    work.mkdir(parents=True, exist_ok=True)
    state_path = work / STATE_FILE
    state = json.loads(state_path.read_text()) if state_path.exists() else {}
    outcome = {}
    for stage in stages:
        digest = stage.digest()
        if not force and state.get(stage.name) == digest and all(p.exists() for p in stage.outputs):
            log.info("stage %s unchanged, skipping", stage.name)
            outcome[stage.name] = "skipped"
            continue
        log.info("stage %s", stage.name)
        for argv in stage.commands:
            code = run(argv)
            if code:
                state.pop(stage.name, None)
                state_path.write_text(json.dumps(state, indent=1, sort_keys=True) + "\n")
                raise StageFailed(stage.name, code)
        state[stage.name] = digest
        state_path.write_text(json.dumps(state, indent=1, sort_keys=True) + "\n")
        outcome[stage.name] = "ran"
    return outcome
