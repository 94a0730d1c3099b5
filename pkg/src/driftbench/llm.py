"""Prompting a chat-completion endpoint to judge drift from scores or PCA vectors.

Requests go through a *transport*: ``HttpTransport`` for a live
OpenAI-compatible endpoint, ``ReplayTransport`` for recorded responses keyed by
prompt hash. An audit log written by one run is itself a valid replay file.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .core import DriftBenchError, dumps_record, read_jsonl, split_header

log = logging.getLogger(__name__)

SAME, DIFFERENT = "same", "different"


class AuthError(DriftBenchError):
    pass


class TransportError(DriftBenchError):
    pass


class EndpointUnavailableError(DriftBenchError):
    pass


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseInput:
    sample_id: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Shot:
    case: CaseInput
    label: int
    rationale: str


@dataclass(frozen=True)
class PromptSpec:
    batch: tuple[CaseInput, ...]
    similarity_metric_name: str = "cosine similarity"
    encoder_name: str = "mfcc"
    input_mode: str = "cosine"
    shots: tuple[Shot, ...] = ()
    template_id: str = "drift-v1"
    pca_dim: int | None = None

    def __post_init__(self):
        if not self.batch:
            raise ValueError("prompt batch is empty")
        if self.input_mode not in ("cosine", "pca"):
            raise ValueError("input_mode must be 'cosine' or 'pca'")
        overlap = {s.case.sample_id for s in self.shots} & {c.sample_id for c in self.batch}
        if overlap:
            raise ValueError(f"few-shot exemplars overlap the batch: {sorted(overlap)}")
        width = 2 if self.input_mode == "cosine" else None
        for c in self.batch + tuple(s.case for s in self.shots):
            if width is None:
                width = len(c.values)
            if len(c.values) != width:
                raise ValueError(f"case {c.sample_id} has {len(c.values)} values, expected {width}")


def fmt4(v: float) -> str:
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def format_values(case: CaseInput, mode: str) -> str:
    body = ", ".join(fmt4(v) for v in case.values)
    return f"({body})" if mode == "cosine" else f"[{body}]"


def render_prompt(spec: PromptSpec) -> str:
    """Deterministic prompt text. Batch cases are numbered; sample ids never appear."""
    n = len(spec.batch)
    if spec.input_mode == "cosine":
        what = ("Each case gives two scores (segment 1 vs 2, segment 2 vs 3) computed with "
                f"{spec.similarity_metric_name} between segment embeddings from {spec.encoder_name}. "
                "Lower scores hint that the voice changed between those segments.")
    else:
        k = spec.pca_dim or len(spec.batch[0].values) // 3
        what = (f"Each case gives the three segment embeddings from {spec.encoder_name}, each reduced "
                f"to {k} principal components and concatenated in segment order ({3 * k} numbers). "
                f"Compare them with {spec.similarity_metric_name} in mind: segments from one voice "
                "should look alike.")
    lines = [
        f"You will judge {n} utterance{'s' if n != 1 else ''} for speaker drift, meaning the "
        "speaker identity shifts at some point inside a single utterance.",
        "Every utterance was cut into three consecutive segments of equal length. " + what,
        "",
    ]
    if spec.shots:
        lines.append("Solved examples:")
        for i, shot in enumerate(spec.shots, 1):
            word = DIFFERENT if shot.label else SAME
            lines.append(f"EXAMPLE {i}: {format_values(shot.case, spec.input_mode)} -> {word} - {shot.rationale}")
        lines.append("")
    lines.append("Cases:")
    for i, case in enumerate(spec.batch, 1):
        lines.append(f"CASE {i}: {format_values(case, spec.input_mode)}")
    lines += [
        "",
        "Decide each case independently. Answer \"same\" when one speaker is heard throughout "
        "(no drift) and \"different\" when the identity shifts (drift), with a short reason.",
        "Reply with exactly one line per case, in order, formatted as:",
        "CASE <n>: same|different - <reason>",
    ]
    return "\n".join(lines) + "\n"


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fragment:
    case: int
    decision: str | None
    rationale: str
    parse_status: str  # ok | ambiguous | missing
    raw_line: str = ""


_CASE_LINE = re.compile(r"^\W*case\s*#?\s*(\d+)\s*[:.)\]-]?\s*(.*)$", re.IGNORECASE)
_SAME = re.compile(r"\bsame\b", re.IGNORECASE)
_DIFF = re.compile(r"\bdifferent\b", re.IGNORECASE)
_SEP = re.compile(r"^[\s*_`\"')\]]*(?:\((?:no\s+)?drift\))?[\s*_`\"')\]]*[-\u2013\u2014:,.;]*\s*")


def _classify(rest: str) -> tuple[str | None, str, str]:
    has_same, has_diff = bool(_SAME.search(rest)), bool(_DIFF.search(rest))
    if has_same == has_diff:
        return None, rest.strip(), "ambiguous"
    word = _SAME if has_same else _DIFF
    m = word.search(rest)
    rationale = _SEP.sub("", rest[m.end():], count=1).strip()
    return (SAME if has_same else DIFFERENT), rationale, "ok"


def parse_response(text: str, expected: int) -> list[Fragment]:
    """One fragment per expected case; never raises on arbitrary text.

    Only lines starting with ``CASE <n>`` count. A decision line naming both or
    neither of same/different is ambiguous, as is a case answered twice with
    conflicting decisions. Unanswered cases are missing.
    """
    found: dict[int, Fragment] = {}
    for line in (text or "").splitlines():
        m = _CASE_LINE.match(line.strip())
        if not m:
            continue
        n = int(m.group(1))
        if not 1 <= n <= expected:
            continue
        decision, rationale, status = _classify(m.group(2))
        frag = Fragment(n, decision, rationale, status, line)
        prev = found.get(n)
        if prev is None:
            found[n] = frag
        elif prev.decision != frag.decision:
            found[n] = Fragment(n, None, prev.rationale, "ambiguous", prev.raw_line)
    return [found.get(i, Fragment(i, None, "", "missing")) for i in range(1, expected + 1)]


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o"
    token_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_parallel: int = 4
    max_attempts: int = 4
    backoff_base: float = 1.0
    timeout_s: float = 60.0
    batch_size: int = 16

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_attempts < 1 or self.batch_size < 1:
            raise ValueError("max_attempts and batch_size must be at least 1")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EndpointConfig":
        """Read the ``[endpoint]`` section of an INI file."""
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise DriftBenchError(f"cannot read endpoint config {path}")
        sec = cp["endpoint"] if cp.has_section("endpoint") else cp[cp.default_section]
        kw: dict[str, Any] = {}
        for name, conv in (("base_url", str), ("model_name", str), ("token_env", str),
                           ("temperature", float), ("max_parallel", int), ("max_attempts", int),
                           ("backoff_base", float), ("timeout_s", float), ("batch_size", int)):
            if name in sec:
                kw[name] = conv(sec[name])
        return cls(**kw)


@dataclass(frozen=True)
class Reply:
    text: str
    latency_ms: float
    timestamp: str
    source: str


Transport = Callable[[str, EndpointConfig], Reply]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class HttpTransport:
    """POST ``{base_url}/chat/completions`` with bearer auth and exponential backoff."""

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(self, client: httpx.Client | None = None, sleep=time.sleep):
        self.client = client or httpx.Client()
        self.sleep = sleep

    def __call__(self, prompt: str, ep: EndpointConfig) -> Reply:
        token = os.environ.get(ep.token_env)
        if not token:
            raise AuthError(f"environment variable {ep.token_env} is not set")
        payload = {"model": ep.model_name, "temperature": ep.temperature,
                   "messages": [{"role": "user", "content": prompt}]}
        url = ep.base_url.rstrip("/") + "/chat/completions"
        last = "no attempt made"
        for attempt in range(ep.max_attempts):
            if attempt:
                self.sleep(ep.backoff_base * 2 ** (attempt - 1))
            t0 = time.perf_counter()
            try:
                resp = self.client.post(url, json=payload, timeout=ep.timeout_s,
                                        headers={"Authorization": f"Bearer {token}"})
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("request to %s failed (%s), attempt %d", url, last, attempt + 1)
                continue
            latency = (time.perf_counter() - t0) * 1000
            if resp.status_code in (401, 403):
                raise AuthError(f"{url} rejected credentials ({resp.status_code})")
            if resp.status_code in self.RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("%s returned %d, attempt %d", url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                text = resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError):
                text = resp.text
            return Reply(text, round(latency, 1), _now(), "live")
        raise TransportError(f"{url}: gave up after {ep.max_attempts} attempts ({last})")


class ReplayTransport:
    """Serve recorded responses by prompt hash (fixture files or earlier audit logs)."""

    def __init__(self, records: Sequence[dict[str, Any]]):
        self.by_hash: dict[str, dict[str, Any]] = {}
        for rec in records:
            if "prompt_hash" in rec and "response" in rec:
                self.by_hash.setdefault(rec["prompt_hash"], rec)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ReplayTransport":
        return cls(split_header(read_jsonl(path))[1])

    def __call__(self, prompt: str, ep: EndpointConfig) -> Reply:
        rec = self.by_hash.get(prompt_hash(prompt))
        if rec is None:
            raise TransportError(f"no recorded response for prompt {prompt_hash(prompt)[:12]}")
        return Reply(rec["response"], float(rec.get("latency_ms", 0.0)),
                     str(rec.get("timestamp", "")), "replay")


class AuditLog:
    """Append-only request/response log; one writer at a time."""

    def __init__(self, path: str | os.PathLike | None, header: dict[str, Any] | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self.records: list[dict[str, Any]] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            first = dumps_record({"type": "header", **header}) + "\n" if header else ""
            self.path.write_text(first, encoding="utf-8")

    def append(self, rec: dict[str, Any]) -> None:
        with self._lock:
            self.records.append(rec)
            if self.path:
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(dumps_record(rec) + "\n")


# ---------------------------------------------------------------------------
# Judging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    sample_id: str
    decision: str | None
    rationale: str
    raw_response_ref: str
    parse_status: str

    @property
    def label(self) -> int | None:
        if self.decision is None:
            return None
        return 1 if self.decision == DIFFERENT else 0

    def to_record(self) -> dict[str, Any]:
        return {"sample_id": self.sample_id, "decision": self.decision, "label": self.label,
                "rationale": self.rationale, "raw_response_ref": self.raw_response_ref,
                "parse_status": self.parse_status}


def judge_batch(spec: PromptSpec, endpoint: EndpointConfig, transport: Transport,
                audit: AuditLog | None = None, request_id: str | None = None) -> list[Verdict]:
    """One verdict per batch case, in order. Transport failure leaves all cases missing."""
    return _judge(spec, endpoint, transport, audit, request_id)[0]


def _judge(spec, endpoint, transport, audit, request_id) -> tuple[list[Verdict], bool]:
    prompt = render_prompt(spec)
    ph = prompt_hash(prompt)
    rid = request_id or ph[:16]
    try:
        reply = transport(prompt, endpoint)
    except TransportError as exc:
        log.warning("request %s failed: %s", rid, exc)
        if audit:
            audit.append({"request_id": rid, "prompt_hash": ph, "model": endpoint.model_name,
                          "status": "failed", "error": str(exc)})
        return [Verdict(c.sample_id, None, "", rid, "missing") for c in spec.batch], False
    if audit:
        audit.append({"request_id": rid, "prompt_hash": ph, "model": endpoint.model_name,
                      "status": "ok", "source": reply.source, "timestamp": reply.timestamp,
                      "latency_ms": reply.latency_ms, "prompt": prompt, "response": reply.text})
    frags = parse_response(reply.text, len(spec.batch))
    return [Verdict(c.sample_id, f.decision, f.rationale, rid, f.parse_status)
            for c, f in zip(spec.batch, frags)], True


@dataclass
class JudgeRun:
    verdicts: list[Verdict]
    prompts: list[str] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {"ok": 0, "ambiguous": 0, "missing": 0}
        for v in self.verdicts:
            out[v.parse_status] += 1
        return out


def judge_cases(cases: Sequence[CaseInput], endpoint: EndpointConfig, transport: Transport,
                audit: AuditLog | None = None, shots: Sequence[Shot] = (), input_mode: str = "cosine",
                metric: str = "cosine similarity", encoder: str = "mfcc",
                pca_dim: int | None = None, parallel: bool = True) -> JudgeRun:
    """Split cases into batches of ``endpoint.batch_size`` and judge them.

    Raises EndpointUnavailableError when every request failed at the transport
    level; partial failures come back as missing verdicts.
    """
    specs = [PromptSpec(tuple(cases[i:i + endpoint.batch_size]), metric, encoder, input_mode,
                        tuple(shots), pca_dim=pca_dim)
             for i in range(0, len(cases), endpoint.batch_size)]
    ids = [f"b{i:04d}-{prompt_hash(render_prompt(s))[:12]}" for i, s in enumerate(specs)]
    workers = min(endpoint.max_parallel, len(specs)) if parallel else 1
    results: list[tuple[list[Verdict], bool] | None] = [None] * len(specs)

    def work(i):
        results[i] = _judge(specs[i], endpoint, transport, audit, ids[i])

    if workers <= 1:
        for i in range(len(specs)):
            work(i)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, range(len(specs))))
    if specs and not any(ok for _, ok in results):
        raise EndpointUnavailableError(f"all {len(specs)} requests to the endpoint failed")
    verdicts = [v for batch, _ in results for v in batch]
    return JudgeRun(verdicts, [render_prompt(s) for s in specs])


# Held-out illustrations, one per subtype, used when few-shot mode has no exemplar file.
DEFAULT_SHOTS = (
    Shot(CaseInput("shot-non_drift", (0.9957, 0.9911)), 0,
         "both scores are high and close, so the voice is stable"),
    Shot(CaseInput("shot-abrupt_drift", (0.9914, 0.7420)), 1,
         "the second score falls sharply, so the speaker changes at the second boundary"),
    Shot(CaseInput("shot-hard_negative", (0.9521, 0.9487)), 0,
         "scores dip a little but evenly, consistent with a recording change rather than a new voice"),
    Shot(CaseInput("shot-smooth_morph", (0.9402, 0.8615)), 1,
         "similarity keeps decreasing across the utterance, a gradual identity shift"),
)


def load_shots(path: str | os.PathLike) -> list[Shot]:
    _, body = split_header(read_jsonl(path))
    return [Shot(CaseInput(str(r["sample_id"]), tuple(float(v) for v in r["values"])),
                 int(r["label"]), str(r.get("rationale", ""))) for r in body]
