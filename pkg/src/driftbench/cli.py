"""``driftbench`` command line: synth, embed, detect, pca, simulate-bound, judge, evaluate, compare, pipeline.

Exit status: 0 on success, 1 on usage or validation errors, 2 on environment
or endpoint failures. Progress goes to stderr; results only to files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bound import (
    REPORT_COLUMNS,
    BoundConfig,
    CalibrationError,
    log_error_slope,
    report_row,
    simulate,
    sweep_bound,
)
from .core import (
    DriftBenchError,
    config_hash,
    file_sha256,
    header_record,
    load_manifest,
    read_jsonl,
    split_header,
    validate_manifest,
    write_jsonl,
)
from .detect import (
    DetectorConfig,
    SimilarityPair,
    min_rule_classify,
    pairs_from_embeddings,
    parse_grid,
    sweep_thresholds,
)
from .embed import MfccConfig, SegmentSpec, embed_manifest, embedding_records, import_embeddings
from .evaluation import (
    compare_runs,
    read_predictions,
    read_report,
    score_run,
    write_comparison,
    write_predictions,
    write_report,
)
from .llm import (
    DEFAULT_SHOTS,
    AuditLog,
    AuthError,
    CaseInput,
    EndpointConfig,
    EndpointUnavailableError,
    HttpTransport,
    ReplayTransport,
    TransportError,
    judge_cases,
    load_shots,
)
from .pca import fit_pca, sample_vector
from .synth import AugmentRanges, BasePool, BuildConfig, build_benchmark
from .toypool import make_toy_pool

log = logging.getLogger("driftbench")

EXIT_OK, EXIT_VALIDATION, EXIT_ENVIRONMENT = 0, 1, 2


class UsageError(DriftBenchError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    vals = tuple(float(x) for x in text.split(",") if x.strip())
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _existing(args, *flags: str) -> None:
    for flag in flags:
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is None:
            raise UsageError(f"{flag} is required")
        for v in value if isinstance(value, list) else [value]:
            if not Path(v).exists():
                raise UsageError(f"{flag}: {v} does not exist")


def _digest(command: str, params: dict[str, Any], inputs: Sequence[str | Path] = ()) -> str:
    return config_hash({"command": command, "params": params,
                        "inputs": [file_sha256(p) for p in inputs]})


def _write_text(path: Path, text: str, digest: str, seed) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"# config_hash={digest} seed={seed}\n{text}", encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_toy_pool(args) -> int:
    make_toy_pool(args.out, args.speakers, args.clips, args.seed)
    log.info("wrote %d x %d toy clips to %s", args.speakers, args.clips, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    _existing(args, "--pool")
    counts = args.counts
    if len(counts) != 4:
        raise UsageError("--counts needs four integers: non_drift,hard_negative,abrupt_drift,smooth_morph")
    cfg = BuildConfig(counts=counts, seed=args.seed, silence_ms=args.silence_ms,
                      max_retries=args.max_retries,
                      augment=AugmentRanges(args.speed_range, args.pitch_range, args.noise_db_range,
                                            args.noise_probability))
    pool = BasePool.from_directory(args.pool)
    log.info("pool: %d speakers, %d clips", len(pool.speakers), len(pool))
    params = {"counts": list(counts), "seed": args.seed, "silence_ms": args.silence_ms,
              "speed": args.speed_range, "pitch": args.pitch_range, "noise": args.noise_db_range,
              "noise_p": args.noise_probability, "retries": args.max_retries,
              "pool": sorted((c.id, len(c.clip)) for c in pool.clips.values())}
    manifest = build_benchmark(pool, args.out, cfg, _digest("synth", params))
    problems = validate_manifest(manifest)
    for v in problems:
        log.error("%s", v)
    if args.figures:
        from .core import read_wav
        from .plotting import plot_morph
        morphs = [s for s in manifest if s.subtype.value == "smooth_morph"]
        if morphs:
            clip = read_wav(manifest.resolve(morphs[0]))
            plot_morph(clip.samples, clip.sample_rate, tuple(morphs[0].construction["morph_window"]),
                       Path(args.out) / "morph_example.png")
    log.info("manifest with %d samples written to %s", len(manifest), Path(args.out) / "manifest.jsonl")
    return EXIT_VALIDATION if problems else EXIT_OK


def cmd_embed(args) -> int:
    _existing(args, "--manifest")
    manifest = load_manifest(args.manifest)
    if args.encoder == "mfcc":
        seg = SegmentSpec(trim_silence=args.trim_silence, overlap=args.overlap)
        emb = embed_manifest(manifest, MfccConfig(), seg)
        params = {"encoder": "mfcc", "trim": args.trim_silence, "overlap": args.overlap}
        inputs = [args.manifest] + [manifest.resolve(s) for s in manifest]
    else:
        _existing(args, "--import-file")
        emb = import_embeddings(args.import_file, manifest)
        params = {"encoder": "import"}
        inputs = [args.manifest, args.import_file]
    encoders = sorted({t[0].encoder_id for t in emb.values()})
    dims = sorted({t[0].dim for t in emb.values()})
    digest = _digest("embed", params, inputs)
    write_jsonl(args.out, [header_record(config_hash=digest, seed=manifest.metadata.get("seed"),
                                         encoder_id=",".join(encoders), dim=dims[0] if dims else None)]
                + list(embedding_records(emb)))
    log.info("wrote %d x 3 embeddings (%s, d=%s) to %s", len(emb), ",".join(encoders), dims, args.out)
    return EXIT_OK


def _load_scores(path) -> tuple[dict[str, Any], list[SimilarityPair]]:
    header, body = split_header(read_jsonl(path))
    return header, [SimilarityPair.from_record(r) for r in body]


def cmd_detect(args) -> int:
    if args.action == "sweep":
        return _detect_sweep(args)
    _existing(args, "--embeddings")
    emb_header, _ = split_header(read_jsonl(args.embeddings)[:1])
    emb = import_embeddings(args.embeddings)
    pairs = pairs_from_embeddings(emb)
    seed = emb_header.get("seed")
    score_digest = _digest("scores", {}, [args.embeddings])
    write_jsonl(args.out, [header_record(config_hash=score_digest, seed=seed,
                                         encoder_id=emb_header.get("encoder_id"))]
                + [p.to_record() for p in pairs])
    cfg = DetectorConfig(args.tau)
    pred_path = Path(args.predictions) if args.predictions else Path(args.out).with_suffix(".predictions.jsonl")
    write_predictions(pred_path, ((p.sample_id, int(min_rule_classify(p, cfg)), "ok") for p in pairs),
                      config_hash=_digest("detect", {"tau": args.tau}, [args.embeddings]), seed=seed,
                      run=f"threshold-{args.tau:g}", classifier="min-rule", input_mode="threshold",
                      tau=args.tau, encoder=emb_header.get("encoder_id"))
    log.info("scored %d samples; predictions at %s", len(pairs), pred_path)
    return EXIT_OK


def _detect_sweep(args) -> int:
    _existing(args, "--manifest")
    if args.scores:
        _existing(args, "--scores")
        header, pairs = _load_scores(args.scores)
        source = args.scores
    else:
        _existing(args, "--embeddings")
        header = split_header(read_jsonl(args.embeddings)[:1])[0]
        pairs = pairs_from_embeddings(import_embeddings(args.embeddings))
        source = args.embeddings
    manifest = load_manifest(args.manifest)
    truth = manifest.by_id()
    labeled = [(p, int(truth[p.sample_id].label)) for p in pairs if p.sample_id in truth]
    taus = parse_grid(args.grid)
    if args.fixed_tau is not None:
        taus = sorted(set(taus) | {args.fixed_tau})
    result = sweep_thresholds(labeled, taus)
    digest = _digest("sweep", {"grid": args.grid, "fixed": args.fixed_tau}, [source, args.manifest])
    seed = header.get("seed")
    recs = [header_record(config_hash=digest, seed=seed, best_tau=result.best.tau, best_f1=result.best.f1)]
    recs += [{"tau": r.tau, "accuracy": r.accuracy, "f1": r.f1, "precision": r.precision,
              "recall": r.recall, "predicted_drift": r.predicted_drift} for r in result.rows]
    out = Path(args.out)
    write_jsonl(out, recs)
    lines = [f"{'tau':>8}{'accuracy':>10}{'f1':>8}{'precision':>11}{'recall':>8}"]
    lines += [f"{r.tau:>8.4f}{r.accuracy:>10.4f}{r.f1:>8.4f}{r.precision:>11.4f}{r.recall:>8.4f}"
              for r in result.rows]
    lines.append(f"best tau {result.best.tau:.4f} (F1 {result.best.f1:.4f})")
    if args.fixed_tau is not None:
        fixed = result.row_at(args.fixed_tau)
        lines.append(f"fixed tau {args.fixed_tau:.4f} (F1 {fixed.f1:.4f})")
    _write_text(out.with_suffix(".txt"), "\n".join(lines) + "\n", digest, seed)
    if args.figures:
        from .plotting import plot_min_similarity, plot_threshold_sweep
        plot_threshold_sweep([r.tau for r in result.rows], [r.f1 for r in result.rows],
                             [r.accuracy for r in result.rows], out.with_suffix(".png"),
                             result.best.tau, args.fixed_tau)
        plot_min_similarity({p.sample_id: p.min_sim for p, _ in labeled},
                            {s.id: s.subtype.value for s in manifest},
                            out.with_name(out.stem + "_min_similarity.png"), args.fixed_tau)
    log.info("best tau %.4f with F1 %.4f", result.best.tau, result.best.f1)
    return EXIT_OK


def cmd_pca(args) -> int:
    _existing(args, "--embeddings")
    header = split_header(read_jsonl(args.embeddings)[:1])[0]
    emb = import_embeddings(args.embeddings)
    ids = list(emb)
    data = np.array([e.vector for sid in ids for e in emb[sid]])
    model = fit_pca(data, args.k)
    model_path = Path(args.model) if args.model else Path(args.out).with_suffix(".model.txt")
    digest = _digest("pca", {"k": args.k}, [args.embeddings])
    model.save(model_path, f"config_hash={digest} seed={header.get('seed')}")
    recs = [header_record(config_hash=digest, seed=header.get("seed"), k=args.k, d=model.d,
                          explained_variance_fraction=model.explained_variance_fraction,
                          fit_population="all segment embeddings of the evaluated set",
                          encoder_id=header.get("encoder_id"))]
    recs += [{"sample_id": sid, "vector": [float(x) for x in sample_vector(model, *emb[sid])]} for sid in ids]
    write_jsonl(args.out, recs)
    log.info("k=%d keeps %.1f%% of variance; %d-dim sample vectors in %s",
             args.k, 100 * model.explained_variance_fraction, 3 * args.k, args.out)
    return EXIT_OK


def cmd_simulate_bound(args) -> int:
    sigmas = args.sweep_sigmas or (args.sigma,)
    taus = args.sweep_taus or (args.tau,)
    if len(sigmas) * len(taus) > 1:
        reports = sweep_bound(args.mu0, args.mu_prime, sigmas, taus, args.trials, args.seed, args.mode, args.d)
    else:
        reports = [simulate(BoundConfig(args.mu0, args.mu_prime, sigmas[0], taus[0], args.trials,
                                        args.mode, args.d), args.seed)]
    digest = _digest("simulate-bound", {k: v for k, v in vars(args).items()
                                        if k not in ("out", "func", "verbose", "quiet", "figures")})
    out = Path(args.out)
    write_jsonl(out, [header_record(config_hash=digest, seed=args.seed)] + [r.to_record() for r in reports])
    rows = [REPORT_COLUMNS] + [tuple(report_row(r)) for r in reports]
    widths = [max(len(r[i]) for r in rows) for i in range(len(REPORT_COLUMNS))]
    text = "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows) + "\n"
    if len({r.delta for r in reports}) > 1:
        text += f"slope of log(total error) vs delta^2: {log_error_slope(reports):.4g}\n"
    _write_text(out.with_suffix(".txt"), text, digest, args.seed)
    if args.figures:
        from .plotting import plot_bound_sweep
        plot_bound_sweep(reports, out.with_suffix(".png"))
    bad = [r for r in reports if not r.within_bound]
    for r in bad:
        log.error("empirical error %.6f exceeds bound %.3e at sigma=%g tau=%g",
                  r.total_empirical, r.total_bound, r.config.sigma, r.config.tau)
    return EXIT_VALIDATION if bad else EXIT_OK


def _cases(args) -> tuple[dict[str, Any], list[CaseInput]]:
    header, body = split_header(read_jsonl(args.scores))
    if args.mode == "cosine":
        if body and "sim_12" not in body[0]:
            raise UsageError("--scores: cosine mode needs a scores file from `detect`")
        return header, [CaseInput(r["sample_id"], (float(r["sim_12"]), float(r["sim_23"]))) for r in body]
    if body and "vector" not in body[0]:
        raise UsageError("--scores: pca mode needs a vectors file from `pca`")
    return header, [CaseInput(r["sample_id"], tuple(float(v) for v in r["vector"])) for r in body]


def cmd_judge(args) -> int:
    _existing(args, "--scores")
    header, cases = _cases(args)
    endpoint = EndpointConfig()
    if args.endpoint_config:
        _existing(args, "--endpoint-config")
        endpoint = EndpointConfig.load(args.endpoint_config)
    if args.fixture:
        _existing(args, "--fixture")
        transport = ReplayTransport.from_file(args.fixture)
    else:
        transport = HttpTransport()
    shots = []
    if args.shots:
        if args.shots_file:
            _existing(args, "--shots-file")
            shots = load_shots(args.shots_file)[: args.shots]
        elif args.mode == "cosine":
            shots = list(DEFAULT_SHOTS[: args.shots])
        else:
            raise UsageError("--shots-file is required for few-shot pca mode")
        if len(shots) < args.shots:
            raise UsageError(f"--shots {args.shots} requested but only {len(shots)} exemplars available")
    inputs = [args.scores] + ([args.shots_file] if args.shots_file else [])
    digest = _digest("judge", {"mode": args.mode, "shots": args.shots, "model": endpoint.model_name,
                               "temperature": endpoint.temperature, "batch": endpoint.batch_size}, inputs)
    seed = header.get("seed")
    out = Path(args.out)
    stem = out.with_suffix("")
    audit = AuditLog(Path(args.audit) if args.audit else stem.with_name(stem.name + ".audit.jsonl"),
                     header={"config_hash": digest, "seed": seed, "model": endpoint.model_name})
    encoder = args.encoder_name or header.get("encoder_id") or "unknown encoder"
    k = header.get("k")
    run = judge_cases(cases, endpoint, transport, audit, shots, args.mode, args.metric_name, encoder,
                      pca_dim=k, parallel=not args.fixture)
    write_jsonl(stem.with_name(stem.name + ".verdicts.jsonl"),
                [header_record(config_hash=digest, seed=seed)] + [v.to_record() for v in run.verdicts])
    mode_name = "cosine" if args.mode == "cosine" else f"pca{k}"
    write_predictions(out, ((v.sample_id, v.label, v.parse_status) for v in run.verdicts),
                      config_hash=digest, seed=seed, run=f"{endpoint.model_name}-{mode_name}-{args.shots}shot",
                      model=endpoint.model_name, input_mode=args.mode, pca_k=k, shots=args.shots,
                      encoder=encoder, temperature=endpoint.temperature,
                      parse_convention="CASE <n>: same|different; both or neither word -> ambiguous")
    log.info("verdicts: %s", run.counts)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _existing(args, "--predictions", "--manifest")
    manifest = load_manifest(args.manifest)
    header, preds = read_predictions(args.predictions)
    scores = None
    inputs = [args.predictions, args.manifest]
    if args.scores:
        _existing(args, "--scores")
        scores = {p.sample_id: p for p in _load_scores(args.scores)[1]}
        inputs.append(args.scores)
    meta = {k: v for k, v in header.items() if k not in ("type", "config_hash")}
    meta["source_config_hash"] = header.get("config_hash")
    report = score_run(preds, manifest, meta, scores)
    digest = _digest("evaluate", {}, inputs)
    txt = write_report(report, args.out, {"config_hash": digest, "seed": meta.get("seed")})
    txt.write_text(f"# config_hash={digest} seed={meta.get('seed')}\n" + txt.read_text(encoding="utf-8"),
                   encoding="utf-8")
    if args.figures and scores:
        from .plotting import plot_min_similarity
        plot_min_similarity({k: v.min_sim for k, v in scores.items()},
                            {s.id: s.subtype.value for s in manifest},
                            Path(args.out).with_suffix(".png"), meta.get("tau"))
    log.info("accuracy %.4f, F1 %.4f, excluded %d", report.accuracy, report.f1, report.excluded)
    return EXIT_OK


def cmd_compare(args) -> int:
    _existing(args, "--reports")
    reports = [read_report(p) for p in args.reports]
    rows = compare_runs(reports)
    digest = _digest("compare", {}, args.reports)
    seeds = sorted({str(r.metadata.get("seed")) for r in reports})
    seed = seeds[0] if len(seeds) == 1 else ",".join(seeds)
    txt = write_comparison(rows, args.out, {"config_hash": digest, "seed": seed})
    txt.write_text(f"# config_hash={digest} seed={seed}\n" + txt.read_text(encoding="utf-8"), encoding="utf-8")
    if args.figures:
        from .plotting import plot_comparison
        plot_comparison(rows, Path(args.out).with_suffix(".png"))
    if any(r.warning for r in rows):
        log.warning("some reports were computed on a different dataset")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .pipeline import StageFailed, run_pipeline
    _existing(args, "--config")
    try:
        outcome = run_pipeline(args.config, force=args.force)
    except StageFailed as exc:
        log.error("%s", exc)
        return exc.code
    log.info("stages: %s", ", ".join(f"{k}={v}" for k, v in outcome.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="driftbench", description="Speaker-drift benchmark and detection toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("toy-pool", help="write a synthetic base pool of source-filter voices")
    s.add_argument("--out", required=True)
    s.add_argument("--speakers", type=int, default=4)
    s.add_argument("--clips", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_toy_pool)

    s = sub.add_parser("synth", help="build the four-subtype benchmark from a base pool")
    s.add_argument("--pool", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--counts", type=_ints, default=(32, 32, 32, 32))
    s.add_argument("--silence-ms", type=float, default=500.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-retries", type=int, default=50)
    s.add_argument("--speed-range", type=lambda t: _floats(t, 2), default=(0.95, 1.05))
    s.add_argument("--pitch-range", type=lambda t: _floats(t, 2), default=(-1.0, 1.0))
    s.add_argument("--noise-db-range", type=lambda t: _floats(t, 2), default=(-35.0, -25.0))
    s.add_argument("--noise-probability", type=float, default=0.5)
    s.add_argument("--figures", action="store_true", help="also render a morph waveform figure")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("embed", help="segment each sample and embed the three segments")
    s.add_argument("--manifest", required=True)
    s.add_argument("--encoder", choices=("mfcc", "import"), default="mfcc")
    s.add_argument("--import-file")
    s.add_argument("--out", required=True)
    s.add_argument("--overlap", type=float, default=0.0)
    s.add_argument("--trim-silence", action="store_true")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("detect", help="adjacent cosine scores and min-rule predictions, or a threshold sweep")
    s.add_argument("action", nargs="?", choices=("classify", "sweep"), default="classify")
    s.add_argument("--embeddings")
    s.add_argument("--scores", help="sweep: use an existing scores file instead of embeddings")
    s.add_argument("--manifest", help="sweep: labels")
    s.add_argument("--tau", type=float, default=0.90)
    s.add_argument("--grid", default="0.80:0.999:0.001")
    s.add_argument("--fixed-tau", type=float, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--predictions")
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("pca", help="fit PCA on segment embeddings and write 3k-dim sample vectors")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--out", required=True)
    s.add_argument("--model")
    s.set_defaults(func=cmd_pca)

    s = sub.add_parser("simulate-bound", help="Monte Carlo check of the min-rule error bound")
    s.add_argument("--mu0", type=float, default=0.95)
    s.add_argument("--mu-prime", type=float, default=0.80)
    s.add_argument("--sigma", type=float, default=0.03)
    s.add_argument("--tau", type=float, default=0.875)
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--mode", choices=("score", "sphere"), default="score")
    s.add_argument("--d", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sweep-sigmas", type=_floats)
    s.add_argument("--sweep-taus", type=_floats)
    s.add_argument("--out", required=True)
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_simulate_bound)

    s = sub.add_parser("judge", help="ask an LLM endpoint (or recorded fixture) for drift verdicts")
    s.add_argument("--scores", required=True)
    s.add_argument("--mode", choices=("cosine", "pca"), default="cosine")
    s.add_argument("--shots", type=int, default=0)
    s.add_argument("--shots-file")
    s.add_argument("--endpoint-config")
    s.add_argument("--fixture", help="replay recorded responses instead of calling the endpoint")
    s.add_argument("--audit")
    s.add_argument("--metric-name", default="cosine similarity")
    s.add_argument("--encoder-name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_judge)

    s = sub.add_parser("evaluate", help="score predictions against the manifest")
    s.add_argument("--predictions", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--scores")
    s.add_argument("--out", required=True)
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="tabulate several evaluation reports")
    s.add_argument("--reports", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--figures", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("pipeline", help="run all stages from a config file, skipping unchanged ones")
    s.add_argument("--config", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_pipeline)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AuthError, EndpointUnavailableError, TransportError) as exc:
        log.error("%s", exc)
        return EXIT_ENVIRONMENT
    except CalibrationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (DriftBenchError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_ENVIRONMENT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
