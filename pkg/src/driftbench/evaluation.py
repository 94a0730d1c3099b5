"""Scoring predictions against a manifest and comparing runs."""

from __future__ import annotations

import hashlib
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    SUBTYPE_ORDER,
    DriftBenchError,
    Manifest,
    header_record,
    read_jsonl,
    split_header,
    write_jsonl,
)
from .detect import Confusion, SimilarityPair

HEADLINE_POLICY = "excluded-from-denominator"


class PredictionError(DriftBenchError):
    pass


def dataset_id(manifest: Manifest) -> str:
    h = hashlib.sha256()
    for s in manifest:
        h.update(f"{s.id}\t{int(s.label)}\n".encode())
    return h.hexdigest()[:12]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    excluded: int
    dataset_size: int
    exclusion_policy: str
    counted_as_error: dict[str, float]
    per_subtype: dict[str, dict[str, Any]]
    score_summary: dict[str, dict[str, float]] | None
    metadata: dict[str, Any] = field(default_factory=dict)
    dataset: str = ""

    def check(self) -> None:
        """Assert the metric identities against the confusion counts."""
        c = Confusion(self.tp, self.fp, self.tn, self.fn)
        assert c.total + self.excluded == self.dataset_size
        assert abs(c.accuracy - self.accuracy) < 1e-12
        assert abs(c.precision - self.precision) < 1e-12
        assert abs(c.recall - self.recall) < 1e-12
        assert abs(c.f1 - self.f1) < 1e-12
        p, r = self.precision, self.recall
        assert abs(self.f1 - (2 * p * r / (p + r) if p + r else 0.0)) < 1e-12

    def to_record(self) -> dict[str, Any]:
        return {"type": "eval_report", **asdict(self)}

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "EvalReport":
        rec = {k: v for k, v in rec.items() if k != "type"}
        return cls(**rec)


def score_run(predictions: Iterable[tuple[str, int | None]], manifest: Manifest,
              metadata: Mapping[str, Any] | None = None,
              scores: Mapping[str, SimilarityPair] | None = None) -> EvalReport:
    """Score predictions (``None`` = excluded) against manifest labels, drift positive.

    Manifest samples without a prediction count as excluded. Headline metrics
    drop excluded samples from the denominator; ``counted_as_error`` reports the
    alternative where each excluded sample is scored as a wrong answer.
    """
    truth = manifest.by_id()
    preds: dict[str, int | None] = {}
    for sid, label in predictions:
        if sid not in truth:
            raise PredictionError(f"prediction for unknown sample id {sid!r}")
        if sid in preds:
            raise PredictionError(f"duplicate prediction for sample id {sid!r}")
        if label is not None and label not in (0, 1):
            raise PredictionError(f"prediction for {sid!r} must be 0, 1 or null, got {label!r}")
        preds[sid] = None if label is None else int(label)

    y_true, y_pred = [], []
    strict_true, strict_pred = [], []
    sub = {st.value: Counter() for st in SUBTYPE_ORDER}
    for s in manifest:
        p = preds.get(s.id)
        counts = sub[s.subtype.value]
        counts["n"] += 1
        strict_true.append(int(s.label))
        if p is None:
            counts["excluded"] += 1
            strict_pred.append(1 - int(s.label))
            continue
        y_true.append(int(s.label))
        y_pred.append(p)
        strict_pred.append(p)
        counts["correct"] += int(p == int(s.label))

    c = Confusion.of(y_true, y_pred)
    strict = Confusion.of(strict_true, strict_pred)
    per_subtype = {}
    for name, k in sub.items():
        if not k["n"]:
            continue
        scored = k["n"] - k["excluded"]
        per_subtype[name] = {"n": k["n"], "excluded": k["excluded"], "correct": k["correct"],
                             "accuracy": k["correct"] / scored if scored else 0.0}
    summary = None
    if scores is not None:
        summary = {}
        for name, lbl in (("no_drift", 0), ("drift", 1)):
            mins = [scores[s.id].min_sim for s in manifest if int(s.label) == lbl and s.id in scores]
            if mins:
                summary[name] = {"n": len(mins), "min": min(mins), "mean": sum(mins) / len(mins),
                                 "max": max(mins)}
    report = EvalReport(
        accuracy=c.accuracy, f1=c.f1, precision=c.precision, recall=c.recall,
        tp=c.tp, fp=c.fp, tn=c.tn, fn=c.fn,
        excluded=len(manifest) - c.total, dataset_size=len(manifest),
        exclusion_policy=HEADLINE_POLICY,
        counted_as_error={"accuracy": strict.accuracy, "f1": strict.f1,
                          "precision": strict.precision, "recall": strict.recall},
        per_subtype=per_subtype, score_summary=summary,
        metadata=dict(metadata or {}), dataset=dataset_id(manifest),
    )
    report.check()
    return report


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def read_predictions(path: str | os.PathLike) -> tuple[dict[str, Any], list[tuple[str, int | None]]]:
    header, body = split_header(read_jsonl(path))
    out = []
    for rec in body:
        try:
            out.append((str(rec["sample_id"]), rec.get("prediction")))
        except KeyError as exc:
            raise PredictionError(f"{path}: record without sample_id: {rec!r}") from exc
    return header, out


def write_predictions(path: str | os.PathLike, rows: Iterable[tuple[str, int | None, str]],
                      **meta: Any) -> None:
    write_jsonl(path, [header_record(**meta)] + [
        {"sample_id": sid, "prediction": pred, "status": status} for sid, pred, status in rows])


def input_type_label(meta: Mapping[str, Any]) -> str:
    mode = meta.get("input_mode", "")
    if mode == "pca":
        return f"PCA Embeddings ({meta.get('pca_k', '?')})"
    if mode == "cosine":
        return "Cosine Scores"
    if mode == "threshold":
        return f"Fixed threshold ({meta.get('tau')})"
    return str(mode or "unknown")


def render_report_text(r: EvalReport) -> str:
    meta = ", ".join(f"{k}={v}" for k, v in sorted(r.metadata.items()))
    lines = [
        f"run: {meta}",
        f"dataset: {r.dataset} ({r.dataset_size} samples, {r.excluded} excluded, policy {r.exclusion_policy})",
        "",
        f"{'metric':<12}{'headline':>10}{'excl=error':>12}",
    ]
    for m in ("accuracy", "f1", "precision", "recall"):
        lines.append(f"{m:<12}{getattr(r, m):>10.4f}{r.counted_as_error[m]:>12.4f}")
    lines += ["", f"confusion (drift positive): tp={r.tp} fp={r.fp} tn={r.tn} fn={r.fn}", "",
              f"{'subtype':<16}{'n':>5}{'excl':>6}{'correct':>9}{'accuracy':>10}"]
    for name, v in r.per_subtype.items():
        lines.append(f"{name:<16}{v['n']:>5}{v['excluded']:>6}{v['correct']:>9}{v['accuracy']:>10.4f}")
    if r.score_summary:
        lines += ["", f"{'class':<10}{'n':>5}{'min(sim) min':>14}{'mean':>9}{'max':>9}"]
        for name, v in r.score_summary.items():
            lines.append(f"{name:<10}{v['n']:>5}{v['min']:>14.4f}{v['mean']:>9.4f}{v['max']:>9.4f}")
    return "\n".join(lines) + "\n"


def write_report(r: EvalReport, path: str | os.PathLike, header: Mapping[str, Any] | None = None) -> Path:
    """Machine-readable record at ``path`` plus a text table beside it (``.txt``)."""
    path = Path(path)
    write_jsonl(path, ([header_record(**header)] if header else []) + [r.to_record()])
    txt = path.with_suffix(".txt")
    txt.write_text(render_report_text(r), encoding="utf-8")
    return txt


def read_report(path: str | os.PathLike) -> EvalReport:
    recs = [r for r in read_jsonl(path) if r.get("type") == "eval_report"]
    if len(recs) != 1:
        raise DriftBenchError(f"{path}: expected one eval_report record, found {len(recs)}")
    return EvalReport.from_record(recs[0])


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    run: str
    input_type: str
    encoder: str
    accuracy: float
    f1: float
    dataset: str
    warning: str


def run_name(meta: Mapping[str, Any]) -> str:
    return str(meta.get("run") or meta.get("model") or meta.get("classifier") or "run")


def compare_runs(reports: Sequence[EvalReport]) -> list[ComparisonRow]:
    """One row per report, best F1 first; rows on a different dataset than the first are flagged."""
    if not reports:
        raise ValueError("nothing to compare")
    ref = reports[0].dataset
    rows = [ComparisonRow(run_name(r.metadata), input_type_label(r.metadata),
                          str(r.metadata.get("encoder", "")), r.accuracy, r.f1, r.dataset,
                          "" if r.dataset == ref else "non-comparable dataset")
            for r in reports]
    return sorted(rows, key=lambda row: -row.f1)


COMPARE_HEADER = ("run", "input_type", "encoder", "accuracy", "f1", "dataset", "warning")


def render_comparison(rows: Sequence[ComparisonRow]) -> str:
    cells = [COMPARE_HEADER] + [(r.run, r.input_type, r.encoder, f"{r.accuracy:.4f}", f"{r.f1:.4f}",
                                 r.dataset, r.warning) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(COMPARE_HEADER))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells) + "\n"


def write_comparison(rows: Sequence[ComparisonRow], path: str | os.PathLike,
                     header: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    write_jsonl(path, ([header_record(**header)] if header else [])
                + [{"type": "comparison_row", **asdict(r)} for r in rows])
    txt = path.with_suffix(".txt")
    txt.write_text(render_comparison(rows), encoding="utf-8")
    return txt
