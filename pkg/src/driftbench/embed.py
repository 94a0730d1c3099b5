"""Three-way segmentation and per-segment speaker embeddings.

The built-in encoder pools frame-level MFCCs into a 52-dim vector:
13 coefficient means, 13 stds, 13 delta means, 13 delta stds. Framing is
25 ms Hamming windows every 10 ms after 0.97 pre-emphasis, 26 mel filters,
log energies, orthonormal DCT-II. c0 is computed and dropped, which makes the
embedding invariant to a global gain (a gain only shifts the log energies by
a constant, and a constant lands entirely in c0).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np
from scipy.fft import dct

from .core import AudioClip, DriftBenchError, Manifest, read_jsonl, read_wav, split_header

MIN_CLIP_S = 0.9
MFCC_DIM = 52


class SegmentationError(DriftBenchError):
    pass


class DegenerateEmbeddingError(DriftBenchError):
    pass


class EmbeddingImportError(DriftBenchError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    encoder_id: str
    segment_index: int
    source_sample_id: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("embedding vector must be a non-empty 1-D array")
        if self.segment_index not in (1, 2, 3):
            raise ValueError("segment_index must be 1, 2 or 3")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size

    def to_record(self) -> dict[str, Any]:
        return {
            "sample_id": self.source_sample_id,
            "segment_index": self.segment_index,
            "encoder_id": self.encoder_id,
            "vector": [float(x) for x in self.vector],
        }


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if not n > 0 or not math.isfinite(n):
        raise DegenerateEmbeddingError("cannot normalize a zero or non-finite vector")
    return v / n


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentSpec:
    """Equal-thirds split, optionally after trimming edge silence.

    ``overlap`` extends each segment into its neighbours by that fraction of
    the nominal segment length; with the default 0 the segments tile the clip.
    """
    trim_silence: bool = False
    overlap: float = 0.0
    trim_threshold: float = 1e-4

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must be in [0, 1)")

    def boundaries(self, n: int) -> tuple[int, int]:
        b1, b2 = n // 3, (2 * n) // 3
        if not 0 < b1 < b2 < n:
            raise SegmentationError(f"{n} samples cannot be split into three parts")
        return b1, b2


def _trim(x: np.ndarray, threshold: float) -> tuple[int, int]:
    loud = np.flatnonzero(np.abs(x) > threshold)
    if loud.size == 0:
        return 0, x.size
    return int(loud[0]), int(loud[-1]) + 1


def segment_utterance(clip: AudioClip, spec: SegmentSpec = SegmentSpec()) -> tuple[AudioClip, AudioClip, AudioClip]:
    start, stop = _trim(clip.samples, spec.trim_threshold) if spec.trim_silence else (0, len(clip))
    x = clip.samples[start:stop]
    if x.size / clip.sample_rate < MIN_CLIP_S:
        raise SegmentationError(
            f"clip of {x.size / clip.sample_rate:.3f} s is shorter than {MIN_CLIP_S} s")
    b1, b2 = spec.boundaries(x.size)
    cuts = [(0, b1), (b1, b2), (b2, x.size)]
    if spec.overlap:
        ext = int(round(spec.overlap * x.size / 3))
        cuts = [(max(0, a - ext), min(x.size, b + ext)) for a, b in cuts]
    return tuple(AudioClip(x[a:b], clip.sample_rate) for a, b in cuts)


# ---------------------------------------------------------------------------
# MFCC encoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MfccConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_coeffs: int = 13
    n_filters: int = 26
    preemphasis: float = 0.97
    delta_width: int = 2

    @property
    def encoder_id(self) -> str:
        return f"mfcc{self.n_coeffs}-pooled"


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with centres evenly spaced on the mel scale."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    if x.size < frame:
        x = np.pad(x, (0, frame - x.size))
    n = 1 + (x.size - frame) // hop
    return np.lib.stride_tricks.sliding_window_view(x, frame)[::hop][:n]


def deltas(feat: np.ndarray, width: int) -> np.ndarray:
    """Regression deltas over +/- ``width`` frames, edges padded by repetition."""
    padded = np.pad(feat, ((width, width), (0, 0)), mode="edge")
    num = sum(k * (padded[width + k:width + k + len(feat)] - padded[width - k:width - k + len(feat)])
              for k in range(1, width + 1))
    return num / (2 * sum(k * k for k in range(1, width + 1)))


def mfcc_frames(x: np.ndarray, sample_rate: int, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Frame-level cepstra c1..c13 (c0 dropped), shape (frames, n_coeffs)."""
    frame = int(round(cfg.frame_ms * sample_rate / 1000))
    hop = int(round(cfg.hop_ms * sample_rate / 1000))
    nfft = 1 << (frame - 1).bit_length()
    emph = np.append(x[:1], x[1:] - cfg.preemphasis * x[:-1])
    frames = frame_signal(emph, frame, hop) * np.hamming(frame)
    power = np.abs(np.fft.rfft(frames, nfft)) ** 2 / nfft
    energies = power @ mel_filterbank(cfg.n_filters, nfft, sample_rate).T
    logmel = np.log(np.maximum(energies, np.finfo(float).eps))
    return dct(logmel, type=2, axis=1, norm="ortho")[:, 1:cfg.n_coeffs + 1]


def mfcc_embed(segment: AudioClip, cfg: MfccConfig = MfccConfig(), sample_id: str = "",
               segment_index: int = 1) -> Embedding:
    if not np.any(segment.samples):
        raise DegenerateEmbeddingError(f"segment {segment_index} of {sample_id!r} is digital silence")
    c = mfcc_frames(segment.samples, segment.sample_rate, cfg)
    d = deltas(c, cfg.delta_width)
    pooled = np.concatenate([c.mean(0), c.std(0), d.mean(0), d.std(0)])
    return Embedding(unit(pooled), cfg.encoder_id, segment_index, sample_id)


def embed_clip(clip: AudioClip, sample_id: str, cfg: MfccConfig = MfccConfig(),
               seg: SegmentSpec = SegmentSpec()) -> tuple[Embedding, Embedding, Embedding]:
    return tuple(mfcc_embed(s, cfg, sample_id, i)
                 for i, s in enumerate(segment_utterance(clip, seg), 1))


def embed_manifest(manifest: Manifest, cfg: MfccConfig = MfccConfig(),
                   seg: SegmentSpec = SegmentSpec()) -> dict[str, tuple[Embedding, Embedding, Embedding]]:
    return {s.id: embed_clip(read_wav(manifest.resolve(s)), s.id, cfg, seg) for s in manifest}


# ---------------------------------------------------------------------------
# Embedding files
# ---------------------------------------------------------------------------

EmbeddingMap = dict[str, tuple[Embedding, Embedding, Embedding]]


def embedding_records(emb: EmbeddingMap) -> Iterable[dict[str, Any]]:
    for sid in emb:
        for e in emb[sid]:
            yield e.to_record()


def parse_embedding_records(records: list[dict[str, Any]], sample_ids: Iterable[str] | None = None,
                            source: str = "<records>") -> EmbeddingMap:
    """Group per-segment records into sample triples, re-normalizing each vector.

    With ``sample_ids`` every listed sample must be present; extra samples in
    the file are ignored.
    """
    _, body = split_header(records)
    parts: dict[str, dict[int, Embedding]] = {}
    dim = None
    for n, rec in enumerate(body, 1):
        try:
            sid, idx, enc = str(rec["sample_id"]), int(rec["segment_index"]), str(rec["encoder_id"])
            vec = np.asarray(rec["vector"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingImportError(f"{source}: record {n} malformed: {exc}") from exc
        if vec.ndim != 1 or vec.size == 0:
            raise EmbeddingImportError(f"{source}: record {n} ({sid}) vector is not a flat list")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingImportError(f"{source}: record {n} ({sid}, segment {idx}) has non-finite values")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise EmbeddingImportError(
                f"{source}: record {n} ({sid}) has dimension {vec.size}, expected {dim}")
        if idx not in (1, 2, 3):
            raise EmbeddingImportError(f"{source}: record {n} ({sid}) segment_index {idx} not in 1..3")
        slot = parts.setdefault(sid, {})
        if idx in slot:
            raise EmbeddingImportError(f"{source}: duplicate segment {idx} for {sid}")
        try:
            slot[idx] = Embedding(unit(vec), enc, idx, sid)
        except DegenerateEmbeddingError:
            raise EmbeddingImportError(f"{source}: record {n} ({sid}) is a zero vector") from None

    wanted = list(parts) if sample_ids is None else list(sample_ids)
    missing = [sid for sid in wanted if sid not in parts]
    if missing:
        raise EmbeddingImportError(f"{source}: no embeddings for sample ids {missing}")
    out: EmbeddingMap = {}
    for sid in wanted:
        segs = parts[sid]
        if sorted(segs) != [1, 2, 3]:
            raise EmbeddingImportError(f"{source}: sample {sid} has segments {sorted(segs)}, need 1, 2, 3")
        encs = {segs[i].encoder_id for i in (1, 2, 3)}
        if len(encs) != 1:
            raise EmbeddingImportError(f"{source}: sample {sid} mixes encoders {sorted(encs)}")
        out[sid] = (segs[1], segs[2], segs[3])
    return out


def import_embeddings(path: str | os.PathLike, manifest: Manifest | None = None) -> EmbeddingMap:
    ids = [s.id for s in manifest] if manifest is not None else None
    return parse_embedding_records(read_jsonl(path), ids, source=str(path))
