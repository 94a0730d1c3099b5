"""Shared domain types, seeded randomness, WAV and manifest I/O."""

from __future__ import annotations

import enum
import hashlib
import json
import os
import wave
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

CANONICAL_RATE = 16000
MIN_DURATION_S = 9.0
MAX_DURATION_S = 40.0
_PCM_SCALE = 32768.0


class DriftBenchError(Exception):
    """Base class for validation failures raised by this package."""


class RateMismatchError(DriftBenchError):
    pass


class AmplitudeOverflowError(DriftBenchError):
    pass


class ManifestFormatError(DriftBenchError):
    pass


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

def new_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed`` and an optional sub-stream path.

    Philox is counter-based, so the stream depends only on the key derived
    from ``(seed, *path)`` through ``SeedSequence``. Sub-streams for parallel
    work are addressed by extending the path, e.g. ``new_rng(seed, subtype, index)``.
    """
    if not -(2**63) <= seed < 2**64:
        raise ValueError(f"seed {seed} does not fit in 64 bits")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(p) for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# Audio
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AudioClip is mono; samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if arr.size and np.max(np.abs(arr)) > 1.0:
            raise AmplitudeOverflowError(
                f"peak amplitude {np.max(np.abs(arr)):.4f} exceeds full scale")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


def read_wav(path: str | os.PathLike) -> AudioClip:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise DriftBenchError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise DriftBenchError(f"{path}: expected 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioClip(ints.astype(np.float64) / _PCM_SCALE, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * _PCM_SCALE), -32768, 32767).astype("<i2")


def write_wav(path: str | os.PathLike, clip: AudioClip) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(to_pcm16(clip.samples).tobytes())


def quantize(clip: AudioClip) -> AudioClip:
    """Round-trip ``clip`` through 16-bit PCM without touching the disk."""
    return AudioClip(to_pcm16(clip.samples).astype(np.float64) / _PCM_SCALE, clip.sample_rate)


# ---------------------------------------------------------------------------
# Labels and samples
# ---------------------------------------------------------------------------

class DriftLabel(enum.IntEnum):
    NO_DRIFT = 0
    DRIFT = 1


class SampleSubtype(str, enum.Enum):
    NON_DRIFT = "non_drift"
    HARD_NEGATIVE = "hard_negative"
    ABRUPT_DRIFT = "abrupt_drift"
    SMOOTH_MORPH = "smooth_morph"

    @property
    def label(self) -> DriftLabel:
        if self in (SampleSubtype.NON_DRIFT, SampleSubtype.HARD_NEGATIVE):
            return DriftLabel.NO_DRIFT
        return DriftLabel.DRIFT


SUBTYPE_ORDER = (
    SampleSubtype.NON_DRIFT,
    SampleSubtype.HARD_NEGATIVE,
    SampleSubtype.ABRUPT_DRIFT,
    SampleSubtype.SMOOTH_MORPH,
)


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    audio_path: str
    label: DriftLabel
    subtype: SampleSubtype
    duration_s: float
    source_speakers: tuple[str, ...] = ()
    construction: dict[str, Any] = field(default_factory=dict, hash=False, compare=True)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "label": int(self.label),
            "subtype": self.subtype.value,
            "duration_s": self.duration_s,
            "source_speakers": list(self.source_speakers),
            "construction": self.construction,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "BenchmarkSample":
        try:
            label = rec["label"]
            if label not in (0, 1) or isinstance(label, bool):
                raise ManifestFormatError(f"sample {rec.get('id')!r}: label must be 0 or 1")
            return cls(
                id=str(rec["id"]),
                audio_path=str(rec["audio_path"]),
                label=DriftLabel(label),
                subtype=SampleSubtype(rec["subtype"]),
                duration_s=float(rec["duration_s"]),
                source_speakers=tuple(rec.get("source_speakers", ())),
                construction=dict(rec.get("construction", {})),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestFormatError(f"bad sample record {rec!r}: {exc}") from exc


@dataclass(frozen=True)
class Manifest:
    samples: tuple[BenchmarkSample, ...]
    metadata: dict[str, Any] = field(default_factory=dict)
    root: str | None = field(default=None, compare=False)

    @property
    def full_benchmark(self) -> bool:
        return bool(self.metadata.get("full_benchmark", False))

    def by_id(self) -> dict[str, BenchmarkSample]:
        return {s.id: s for s in self.samples}

    def resolve(self, sample: BenchmarkSample) -> Path:
        p = Path(sample.audio_path)
        if not p.is_absolute() and self.root is not None:
            p = Path(self.root) / p
        return p

    def __len__(self):
        return len(self.samples)

    def __iter__(self) -> Iterator[BenchmarkSample]:
        return iter(self.samples)


# ---------------------------------------------------------------------------
# Line-delimited records
# ---------------------------------------------------------------------------

def dumps_record(rec: dict[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False, allow_nan=False)


def write_jsonl(path: str | os.PathLike, records: Iterable[dict[str, Any]]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def read_jsonl(path: str | os.PathLike) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    return out


def split_header(records: list[dict[str, Any]]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Separate an optional leading ``{"type": "header"}`` record from the body."""
    if records and records[0].get("type") == "header":
        return records[0], records[1:]
    return {}, records


def header_record(**meta: Any) -> dict[str, Any]:
    return {"type": "header", **meta}


def config_hash(params: dict[str, Any]) -> str:
    return hashlib.sha256(dumps_record(params).encode()).hexdigest()[:16]


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Manifest serialization and validation
# ---------------------------------------------------------------------------

def manifest_records(m: Manifest) -> list[dict[str, Any]]:
    return [header_record(**m.metadata)] + [s.to_record() for s in m.samples]


def save_manifest(m: Manifest, path: str | os.PathLike) -> None:
    write_jsonl(path, manifest_records(m))


def parse_manifest(records: list[dict[str, Any]], root: str | None = None) -> Manifest:
    header, body = split_header(records)
    meta = {k: v for k, v in header.items() if k != "type"}
    return Manifest(tuple(BenchmarkSample.from_record(r) for r in body), meta, root)


def load_manifest(path: str | os.PathLike) -> Manifest:
    return parse_manifest(read_jsonl(path), root=str(Path(path).resolve().parent))


@dataclass(frozen=True)
class Violation:
    sample_id: str | None
    rule: str
    detail: str

    def __str__(self):
        where = self.sample_id if self.sample_id is not None else "<manifest>"
        return f"{where}: {self.rule}: {self.detail}"


def validate_manifest(m: Manifest, check_audio: bool = True) -> list[Violation]:
    """Check every manifest invariant; an empty list means the manifest conforms.

    Balance rules only apply when the header flags the set as a full benchmark.
    Missing or unreadable audio is reported, never raised.
    """
    out: list[Violation] = []
    seen: set[str] = set()
    for s in m.samples:
        if s.id in seen:
            out.append(Violation(s.id, "unique-id", "duplicate sample id"))
        seen.add(s.id)
        if s.label != s.subtype.label:
            out.append(Violation(s.id, "subtype-label",
                                 f"subtype {s.subtype.value} implies label {int(s.subtype.label)}, got {int(s.label)}"))
        if not MIN_DURATION_S <= s.duration_s <= MAX_DURATION_S:
            out.append(Violation(s.id, "duration",
                                 f"{s.duration_s:.3f} s outside [{MIN_DURATION_S:g}, {MAX_DURATION_S:g}]"))
        if s.subtype is SampleSubtype.SMOOTH_MORPH:
            win = s.construction.get("morph_window")
            if not (isinstance(win, (list, tuple)) and len(win) == 2):
                out.append(Violation(s.id, "morph-window", "smooth_morph sample lacks [T1, T2]"))
            else:
                t1, t2 = float(win[0]), float(win[1])
                if not 0.0 <= t1 < t2 <= s.duration_s:
                    out.append(Violation(s.id, "morph-window",
                                         f"window [{t1:g}, {t2:g}] not within 0 <= T1 < T2 <= {s.duration_s:g}"))
        if check_audio:
            out.extend(_check_audio(m, s))

    if m.full_benchmark:
        labels = Counter(int(s.label) for s in m.samples)
        if labels[0] != labels[1]:
            out.append(Violation(None, "label-balance",
                                 f"{labels[1]} drift vs {labels[0]} no-drift samples"))
        subtypes = Counter(s.subtype for s in m.samples)
        counts = [subtypes[st] for st in SUBTYPE_ORDER]
        if len(set(counts)) != 1:
            detail = ", ".join(f"{st.value}={subtypes[st]}" for st in SUBTYPE_ORDER)
            out.append(Violation(None, "subtype-count", f"unequal subtype counts: {detail}"))
    return out


def _check_audio(m: Manifest, s: BenchmarkSample) -> list[Violation]:
    path = m.resolve(s)
    try:
        clip = read_wav(path)
    except (OSError, EOFError, wave.Error, DriftBenchError) as exc:
        return [Violation(s.id, "audio-readable", f"{path}: {exc}")]
    out = []
    rate = m.metadata.get("sample_rate")
    if rate is not None and clip.sample_rate != rate:
        out.append(Violation(s.id, "sample-rate", f"{clip.sample_rate} Hz, manifest says {rate} Hz"))
    if abs(clip.duration - s.duration_s) > 1.0 / clip.sample_rate:
        out.append(Violation(s.id, "duration-mismatch",
                             f"file is {clip.duration:.4f} s, record says {s.duration_s:.4f} s"))
    return out


def silence_regions(sample: BenchmarkSample) -> Sequence[tuple[int, int]]:
    """Half-open sample ranges of inserted silence recorded at construction."""
    return [tuple(r) for r in sample.construction.get("silence_regions", [])]
