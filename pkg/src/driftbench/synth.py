"""Benchmark construction: silence-joined concatenation, hard negatives, cross-fade morphs."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.signal import resample_poly

from .core import (
    CANONICAL_RATE,
    MAX_DURATION_S,
    MIN_DURATION_S,
    SUBTYPE_ORDER,
    AmplitudeOverflowError,
    AudioClip,
    BenchmarkSample,
    DriftBenchError,
    Manifest,
    RateMismatchError,
    SampleSubtype,
    new_rng,
    quantize,
    read_wav,
    save_manifest,
    write_wav,
)

log = logging.getLogger(__name__)


class MissingClipError(DriftBenchError):
    pass


class ConstructionError(DriftBenchError):
    pass


@dataclass(frozen=True, eq=False)
class BaseClip:
    id: str
    speaker: str
    clip: AudioClip


class BasePool:
    """Speaker-tagged base clips, addressable by ``"<speaker>/<stem>"`` ids."""

    def __init__(self, clips: Sequence[BaseClip], description: str = ""):
        self.clips = {c.id: c for c in clips}
        if len(self.clips) != len(clips):
            raise DriftBenchError("duplicate clip ids in base pool")
        self.description = description
        self.by_speaker: dict[str, list[BaseClip]] = {}
        for c in sorted(clips, key=lambda c: c.id):
            self.by_speaker.setdefault(c.speaker, []).append(c)
        rates = {c.clip.sample_rate for c in clips}
        if len(rates) > 1:
            raise RateMismatchError(f"base pool mixes sample rates {sorted(rates)}")
        self.sample_rate = rates.pop() if rates else CANONICAL_RATE

    @classmethod
    def from_directory(cls, root: str | Path) -> "BasePool":
        root = Path(root)
        clips = []
        for spk_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            for wav in sorted(spk_dir.glob("*.wav")):
                clips.append(BaseClip(f"{spk_dir.name}/{wav.stem}", spk_dir.name, read_wav(wav)))
        return cls(clips, description=f"{root.name}: {len(clips)} clips")

    @property
    def speakers(self) -> list[str]:
        return sorted(self.by_speaker)

    def __getitem__(self, clip_id: str) -> BaseClip:
        try:
            return self.clips[clip_id]
        except KeyError:
            raise MissingClipError(f"base clip {clip_id!r} not in pool") from None

    def __len__(self):
        return len(self.clips)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def silence_samples(silence_ms: float, sample_rate: int) -> int:
    return int(round(silence_ms * sample_rate / 1000.0))


def concat_with_silence(clips: Sequence[AudioClip], silence_ms: float) -> AudioClip:
    if not clips:
        raise ValueError("nothing to concatenate")
    if silence_ms < 0:
        raise ValueError("silence_ms must be non-negative")
    rates = {c.sample_rate for c in clips}
    if len(rates) != 1:
        raise RateMismatchError(f"cannot join clips with sample rates {sorted(rates)}")
    rate = rates.pop()
    if len(clips) == 1:
        return clips[0]
    gap = np.zeros(silence_samples(silence_ms, rate))
    parts = [clips[0].samples]
    for c in clips[1:]:
        parts += [gap, c.samples]
    return AudioClip(np.concatenate(parts), rate)


def _silence_layout(lengths: Sequence[int], gap: int) -> list[list[int]]:
    regions, pos = [], 0
    for n in lengths[:-1]:
        pos += n
        regions.append([pos, pos + gap])
        pos += gap
    return regions


@dataclass(frozen=True)
class AugmentSpec:
    speed_factor: float = 1.0
    pitch_shift_semitones: float = 0.0
    noise_level_db: float | None = None

    def __post_init__(self):
        if not self.speed_factor > 0:
            raise ValueError("speed_factor must be positive")
        if self.noise_level_db is not None and not self.noise_level_db < 0:
            raise ValueError("noise_level_db must be negative (dBFS)")

    @property
    def is_identity(self) -> bool:
        return (self.speed_factor == 1.0 and self.pitch_shift_semitones == 0.0
                and self.noise_level_db is None)


def _ratio(x: float) -> Fraction:
    return Fraction(x).limit_denominator(1000)


def change_speed(x: np.ndarray, factor: float) -> np.ndarray:
    """Time-scale by resampling: output has ``len(x) / factor`` samples (rounded up)."""
    r = _ratio(factor)
    if r == 1:
        return x
    return resample_poly(x, r.denominator, r.numerator)


def ola_stretch(x: np.ndarray, out_len: int, frame: int = 640, tolerance: int | None = None) -> np.ndarray:
    """Waveform-similarity overlap-add (WSOLA) time stretch to exactly ``out_len`` samples.

    Each analysis frame may move up to ``tolerance`` samples from its nominal
    position to line up with the natural continuation of the previous frame,
    which keeps periodic signals in phase. Output samples are normalized
    weighted averages of input samples, so the peak never exceeds the input peak.
    """
    n = x.size
    if out_len == n:
        return x.copy()
    frame = min(frame, max(2, n))
    hop = frame // 2
    tol = frame // 4 if tolerance is None else tolerance
    win = np.hanning(frame + 2)[1:-1]
    n_frames = int(math.ceil(out_len / hop)) + 1
    ana_hop = (n - frame) / max(n_frames - 1, 1)
    xp = np.concatenate([np.zeros(tol), x, np.zeros(frame + hop + tol)])
    out = np.zeros(n_frames * hop + frame)
    norm = np.zeros_like(out)
    pos = 0
    for k in range(n_frames):
        a = int(round(k * ana_hop))
        if k and tol:
            target = xp[tol + pos + hop:tol + pos + hop + frame]
            region = xp[max(0, a):a + 2 * tol + frame]
            corr = np.correlate(region, target, mode="valid")
            pos = max(0, a) - tol + int(np.argmax(corr)) if corr.size else a
        else:
            pos = a
        seg = xp[tol + pos:tol + pos + frame]
        s = k * hop
        out[s:s + frame] += win * seg
        norm[s:s + frame] += win
    norm[norm < 1e-8] = 1.0
    return (out / norm)[:out_len]


def shift_pitch(x: np.ndarray, semitones: float) -> np.ndarray:
    """Resample to move the pitch, then overlap-add back to the original length."""
    if semitones == 0:
        return x
    moved = change_speed(x, 2.0 ** (semitones / 12.0))
    return ola_stretch(moved, x.size)


def white_noise(n: int, level_db: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise rescaled so its RMS is exactly ``level_db`` dBFS."""
    g = rng.standard_normal(n)
    rms = np.sqrt(np.mean(g * g))
    return g * (10.0 ** (level_db / 20.0) / rms)


def apply_augmentations(clip: AudioClip, spec: AugmentSpec, rng: np.random.Generator) -> AudioClip:
    if spec.is_identity:
        return clip
    x = clip.samples
    if spec.speed_factor != 1.0:
        x = change_speed(x, spec.speed_factor)
    if spec.pitch_shift_semitones != 0.0:
        x = shift_pitch(x, spec.pitch_shift_semitones)
    if spec.noise_level_db is not None:
        x = x + white_noise(x.size, spec.noise_level_db, rng)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 1.0:
        raise AmplitudeOverflowError(f"augmentation {spec} drives peak to {peak:.4f}")
    return AudioClip(x, clip.sample_rate)


# ---------------------------------------------------------------------------
# Sample constructors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConcatPattern:
    """Three base-clip ids filling the s1, s2, s3 slots."""
    slots: tuple[str, str, str]

    def speakers(self, pool: BasePool) -> list[str]:
        return [pool[c].speaker for c in self.slots]


def _sample(sample_id, audio_path, subtype, clip, speakers, construction) -> BenchmarkSample:
    return BenchmarkSample(
        id=sample_id,
        audio_path=audio_path,
        label=subtype.label,
        subtype=subtype,
        duration_s=len(clip) / clip.sample_rate,
        source_speakers=tuple(dict.fromkeys(speakers)),
        construction=construction,
    )


def _pattern_string(speakers: Sequence[str]) -> str:
    letters: dict[str, str] = {}
    for s in speakers:
        letters.setdefault(s, "ABC"[len(letters)])
    return "".join(letters[s] for s in speakers)


def make_abrupt_or_nondrift(pattern: ConcatPattern, pool: BasePool, silence_ms: float = 500.0,
                            sample_id: str = "sample", audio_path: str = "",
                            extra: dict[str, Any] | None = None) -> tuple[AudioClip, BenchmarkSample]:
    if len(pattern.slots) != 3:
        raise ValueError("a concatenation pattern has exactly three slots")
    base = [pool[c] for c in pattern.slots]
    speakers = [b.speaker for b in base]
    clip = concat_with_silence([b.clip for b in base], silence_ms)
    subtype = SampleSubtype.ABRUPT_DRIFT if len(set(speakers)) >= 2 else SampleSubtype.NON_DRIFT
    gap = silence_samples(silence_ms, clip.sample_rate)
    construction = {
        "kind": "concat",
        "pattern": _pattern_string(speakers),
        "slots": [{"clip": b.id, "speaker": b.speaker, "augment": None} for b in base],
        "silence_ms": silence_ms,
        "silence_regions": _silence_layout([len(b.clip) for b in base], gap),
        "distinct_speakers": len(set(speakers)),
        **(extra or {}),
    }
    return clip, _sample(sample_id, audio_path, subtype, clip, speakers, construction)


def make_hard_negative(same_speaker_clips: Sequence[BaseClip], spec: AugmentSpec, silence_ms: float,
                       rng: np.random.Generator, augment_slots: Sequence[int] | None = None,
                       sample_id: str = "sample", audio_path: str = "",
                       extra: dict[str, Any] | None = None,
                       noise_seeds: Sequence[Sequence[int]] | None = None) -> tuple[AudioClip, BenchmarkSample]:
    """Join same-speaker clips with at least one slot perturbed by ``spec``.

    ``augment_slots`` defaults to one slot drawn from ``rng``. When ``noise_seeds``
    is given, slot ``i``'s noise comes from ``new_rng(*noise_seeds[i])`` so the
    sample can be rebuilt from its record alone.
    """
    speakers = {c.speaker for c in same_speaker_clips}
    if len(speakers) != 1:
        raise ValueError(f"hard negatives need clips from one speaker, got {sorted(speakers)}")
    n = len(same_speaker_clips)
    if augment_slots is None:
        augment_slots = [int(rng.integers(n))]
    augment_slots = sorted(set(int(i) for i in augment_slots))
    if not augment_slots or not all(0 <= i < n for i in augment_slots):
        raise ValueError(f"augment_slots must name at least one of 0..{n - 1}")
    parts, slots = [], []
    for i, bc in enumerate(same_speaker_clips):
        aug = None
        clip = bc.clip
        if i in augment_slots:
            slot_rng = new_rng(*noise_seeds[i]) if noise_seeds is not None else rng
            clip = apply_augmentations(clip, spec, slot_rng)
            aug = asdict(spec)
            if noise_seeds is not None:
                aug["noise_seed"] = list(noise_seeds[i])
        parts.append(clip)
        slots.append({"clip": bc.id, "speaker": bc.speaker, "augment": aug})
    out = concat_with_silence(parts, silence_ms)
    construction = {
        "kind": "concat",
        "pattern": "A" * n,
        "slots": slots,
        "silence_ms": silence_ms,
        "silence_regions": _silence_layout([len(p) for p in parts],
                                           silence_samples(silence_ms, out.sample_rate)),
        "distinct_speakers": 1,
        "degenerate": spec.is_identity,
        **(extra or {}),
    }
    return out, _sample(sample_id, audio_path, SampleSubtype.HARD_NEGATIVE, out,
                        [same_speaker_clips[0].speaker] * n, construction)


@dataclass(frozen=True, eq=False)
class MorphSpec:
    source_a: AudioClip
    source_b: AudioClip
    t1: float
    t2: float
    ref_a: Any = "A"
    ref_b: Any = "B"

    def __post_init__(self):
        if self.source_a.sample_rate != self.source_b.sample_rate:
            raise RateMismatchError("morph sources must share a sample rate")
        limit = min(self.source_a.duration, self.source_b.duration)
        if not 0.0 <= self.t1 < self.t2 <= limit:
            raise ValueError(
                f"morph window [{self.t1}, {self.t2}] must satisfy 0 <= T1 < T2 <= {limit:.4f}")


def crossfade_weights(n: int, sample_rate: int, t1: float, t2: float) -> np.ndarray:
    """Per-sample weight on the second source: 0 before T1, linear ramp, 1 after T2."""
    t = np.arange(n) / sample_rate
    alpha = (t - t1) / (t2 - t1)
    return np.where(t < t1, 0.0, np.where(t > t2, 1.0, alpha))


def crossfade_morph(spec: MorphSpec, sample_id: str = "sample", audio_path: str = "",
                    extra: dict[str, Any] | None = None) -> tuple[AudioClip, BenchmarkSample]:
    """Blend from source A to source B over [T1, T2]; output spans source B's length."""
    rate = spec.source_b.sample_rate
    n = len(spec.source_b)
    a = np.zeros(n)
    m = min(n, len(spec.source_a))
    a[:m] = spec.source_a.samples[:m]
    b = spec.source_b.samples
    alpha = crossfade_weights(n, rate, spec.t1, spec.t2)
    y = np.where(alpha == 0.0, a, np.where(alpha == 1.0, b, (1.0 - alpha) * a + alpha * b))
    out = AudioClip(y, rate)
    construction = {
        "kind": "morph",
        "morph_window": [spec.t1, spec.t2],
        "source_a": spec.ref_a,
        "source_b": spec.ref_b,
        "silence_ms": 0,
        "silence_regions": [],
        "distinct_speakers": 2,
        **(extra or {}),
    }
    return out, _sample(sample_id, audio_path, SampleSubtype.SMOOTH_MORPH, out, ["A", "B"], construction)


# ---------------------------------------------------------------------------
# Rebuilding from construction records
# ---------------------------------------------------------------------------

def render_construction(construction: dict[str, Any], pool: BasePool) -> AudioClip:
    """Re-synthesize a sample's audio (before PCM quantization) from its record."""
    if construction["kind"] == "morph":
        a = concat_with_silence([pool[c].clip for c in construction["source_a"]["clips"]], 0)
        b = concat_with_silence([pool[c].clip for c in construction["source_b"]["clips"]], 0)
        t1, t2 = construction["morph_window"]
        clip, _ = crossfade_morph(MorphSpec(a, b, t1, t2))
        return clip
    parts = []
    for slot in construction["slots"]:
        clip = pool[slot["clip"]].clip
        aug = slot.get("augment")
        if aug:
            spec = AugmentSpec(aug["speed_factor"], aug["pitch_shift_semitones"], aug["noise_level_db"])
            clip = apply_augmentations(clip, spec, new_rng(*aug["noise_seed"]))
        parts.append(clip)
    return concat_with_silence(parts, construction["silence_ms"])


# ---------------------------------------------------------------------------
# Benchmark builder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentRanges:
    """Uniform ranges from which each hard negative's perturbation is drawn."""
    speed: tuple[float, float] = (0.95, 1.05)
    pitch_semitones: tuple[float, float] = (-1.0, 1.0)
    noise_db: tuple[float, float] = (-35.0, -25.0)
    noise_probability: float = 0.5


@dataclass(frozen=True)
class BuildConfig:
    counts: tuple[int, int, int, int] = (32, 32, 32, 32)
    seed: int = 0
    silence_ms: float = 500.0
    max_retries: int = 50
    augment: AugmentRanges = AugmentRanges()


def _pick_clips(rng, pool: BasePool, speaker: str, k: int) -> tuple[list[BaseClip], bool]:
    clips = pool.by_speaker[speaker]
    reuse = len(clips) < k
    idx = rng.choice(len(clips), size=k, replace=reuse)
    return [clips[int(i)] for i in idx], reuse


def _pick_speakers(rng, pool: BasePool, k: int) -> list[str]:
    spk = pool.speakers
    return [spk[int(i)] for i in rng.choice(len(spk), size=k, replace=False)]


def _round3(x: float) -> float:
    return float(round(x, 3))


def _plan(subtype: SampleSubtype, rng, pool: BasePool, cfg: BuildConfig,
          seed_path: list[int]) -> dict[str, Any]:
    """Draw every random choice for one sample, in slot order, into a record."""
    base = {"rng": seed_path, "silence_ms": cfg.silence_ms}
    if subtype is SampleSubtype.NON_DRIFT:
        (spk,) = _pick_speakers(rng, pool, 1)
        clips, reuse = _pick_clips(rng, pool, spk, 3)
        return {**base, "kind": "concat", "slots": [{"clip": c.id} for c in clips], "reuse": reuse}
    if subtype is SampleSubtype.ABRUPT_DRIFT:
        a, b = _pick_speakers(rng, pool, 2)
        layout = ("A", "B", "B") if rng.random() < 0.5 else ("A", "A", "B")
        ca, ra = _pick_clips(rng, pool, a, layout.count("A"))
        cb, rb = _pick_clips(rng, pool, b, layout.count("B"))
        clips = ca + cb
        return {**base, "kind": "concat", "slots": [{"clip": c.id} for c in clips], "reuse": ra or rb}
    if subtype is SampleSubtype.HARD_NEGATIVE:
        (spk,) = _pick_speakers(rng, pool, 1)
        clips, reuse = _pick_clips(rng, pool, spk, 3)
        r = cfg.augment
        n_aug = int(rng.integers(1, 4))
        slots = sorted(int(i) for i in rng.choice(3, size=n_aug, replace=False))
        noise = r.noise_db if rng.random() < r.noise_probability else None
        spec = {
            "speed_factor": _round3(rng.uniform(*r.speed)),
            "pitch_shift_semitones": _round3(rng.uniform(*r.pitch_semitones)),
            "noise_level_db": _round3(rng.uniform(*noise)) if noise else None,
        }
        out = []
        for i, c in enumerate(clips):
            aug = {**spec, "noise_seed": seed_path + [100 + i]} if i in slots else None
            out.append({"clip": c.id, "augment": aug})
        return {**base, "kind": "concat", "slots": out, "reuse": reuse}
    # smooth morph: each side is a run of same-speaker clips joined without silence
    a, b = _pick_speakers(rng, pool, 2)
    sides = {}
    for role, spk in (("source_a", a), ("source_b", b)):
        order = rng.permutation(len(pool.by_speaker[spk]))
        chosen, total = [], 0.0
        for i in order:
            c = pool.by_speaker[spk][int(i)]
            chosen.append(c.id)
            total += c.clip.duration
            if total >= MIN_DURATION_S:
                break
        sides[role] = {"speaker": spk, "clips": chosen, "duration": total}
    span = min(sides["source_a"]["duration"], sides["source_b"]["duration"])
    t1 = _round3(rng.uniform(0.25, 0.4) * span)
    t2 = _round3(min(t1 + rng.uniform(0.2, 0.35) * span, span))
    for side in sides.values():
        del side["duration"]
    return {**base, "kind": "morph", **sides, "morph_window": [t1, t2], "silence_ms": 0}


def _realize(plan: dict[str, Any], subtype: SampleSubtype, pool: BasePool,
             sample_id: str, audio_path: str) -> tuple[AudioClip, BenchmarkSample]:
    extra = {k: plan[k] for k in ("rng", "reuse") if k in plan}
    if plan["kind"] == "morph":
        a = concat_with_silence([pool[c].clip for c in plan["source_a"]["clips"]], 0)
        b = concat_with_silence([pool[c].clip for c in plan["source_b"]["clips"]], 0)
        t1, t2 = plan["morph_window"]
        clip, s = crossfade_morph(MorphSpec(a, b, t1, t2, plan["source_a"], plan["source_b"]),
                                  sample_id, audio_path, extra)
        speakers = (plan["source_a"]["speaker"], plan["source_b"]["speaker"])
        s = BenchmarkSample(s.id, s.audio_path, s.label, s.subtype, s.duration_s, speakers, s.construction)
        return clip, s
    clips = [pool[slot["clip"]] for slot in plan["slots"]]
    if subtype is SampleSubtype.HARD_NEGATIVE:
        aug_slots = [i for i, slot in enumerate(plan["slots"]) if slot["augment"]]
        first = plan["slots"][aug_slots[0]]["augment"]
        spec = AugmentSpec(first["speed_factor"], first["pitch_shift_semitones"], first["noise_level_db"])
        seeds = [slot["augment"]["noise_seed"] if slot["augment"] else None for slot in plan["slots"]]
        return make_hard_negative(clips, spec, plan["silence_ms"], new_rng(0), aug_slots,
                                  sample_id, audio_path, extra, noise_seeds=seeds)
    return make_abrupt_or_nondrift(ConcatPattern(tuple(c.id for c in clips)), pool,
                                   plan["silence_ms"], sample_id, audio_path, extra)


def build_sample(subtype: SampleSubtype, index: int, pool: BasePool, cfg: BuildConfig,
                 audio_path: str = "") -> tuple[AudioClip, BenchmarkSample]:
    """Construct one sample, redrawing choices until its duration is in range."""
    st_idx = SUBTYPE_ORDER.index(subtype)
    sample_id = f"{subtype.value}_{index:03d}"
    last = None
    for attempt in range(cfg.max_retries):
        path = [cfg.seed, st_idx, index, attempt]
        plan = _plan(subtype, new_rng(*path), pool, cfg, path)
        try:
            clip, sample = _realize(plan, subtype, pool, sample_id, audio_path)
        except (AmplitudeOverflowError, ValueError) as exc:
            last = str(exc)
            continue
        if MIN_DURATION_S <= sample.duration_s <= MAX_DURATION_S:
            return quantize(clip), sample
        last = f"duration {sample.duration_s:.2f} s"
    raise ConstructionError(
        f"could not build {subtype.value} sample {index} within {cfg.max_retries} attempts "
        f"(last failure: {last}); the base pool is too small or its clips too short/long")


def build_benchmark(pool: BasePool, out_dir: str | Path, cfg: BuildConfig = BuildConfig(),
                    config_digest: str | None = None) -> Manifest:
    """Write ``audio/<id>.wav`` files and ``manifest.jsonl`` under ``out_dir``."""
    if len(pool.speakers) < 2:
        raise ConstructionError("base pool needs at least two speakers")
    if len(cfg.counts) != 4 or any(c < 0 for c in cfg.counts):
        raise ValueError("counts must be four non-negative integers")
    out_dir = Path(out_dir)
    samples = []
    for subtype, count in zip(SUBTYPE_ORDER, cfg.counts):
        for i in range(count):
            rel = f"audio/{subtype.value}_{i:03d}.wav"
            clip, sample = build_sample(subtype, i, pool, cfg, rel)
            write_wav(out_dir / rel, clip)
            samples.append(sample)
        log.info("built %d %s samples", count, subtype.value)
    balanced = len(set(cfg.counts)) == 1 and cfg.counts[0] > 0
    meta = {
        "sample_rate": pool.sample_rate,
        "silence_ms": cfg.silence_ms,
        "seed": cfg.seed,
        "counts": dict(zip((s.value for s in SUBTYPE_ORDER), cfg.counts)),
        "full_benchmark": balanced,
        "balanced": balanced,
        "base_pool": pool.description,
        "augment_ranges": asdict(cfg.augment),
        "rng": "numpy Philox via SeedSequence([seed, subtype, index, attempt])",
    }
    if config_digest:
        meta["config_hash"] = config_digest
    manifest = Manifest(tuple(samples), meta, str(out_dir.resolve()))
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
