"""Source-filter "speakers" for exercising the pipeline without real recordings.

Each speaker has a fixed pitch range, vocal-tract scale and spectral tilt; an
utterance is a run of vowel-like syllables separated by short pauses. The
voices are crude but differ in the spectral envelope, which is what MFCC
pooling picks up.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import CANONICAL_RATE, AudioClip, new_rng, write_wav

# (F1, F2, F3) in Hz for an adult male tract
_VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [300, 870, 2240],
    [530, 1840, 2480],
    [570, 840, 2410],
    [660, 1720, 2410],
])
_BANDWIDTHS = np.array([80.0, 100.0, 140.0])


@dataclass(frozen=True)
class Voice:
    f0: float
    tract_scale: float
    tilt: float
    breath: float


def random_voice(rng: np.random.Generator) -> Voice:
    return Voice(
        f0=float(rng.uniform(90, 240)),
        tract_scale=float(rng.uniform(0.85, 1.25)),
        tilt=float(rng.uniform(0.80, 0.97)),
        breath=float(rng.uniform(0.0, 0.08)),
    )


def _resonator(x, freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return lfilter([1.0 - r], a, x)


def _syllable(voice: Voice, n: int, fs: int, rng) -> np.ndarray:
    f0 = voice.f0 * (1 + 0.08 * rng.standard_normal()) * np.linspace(1.05, 0.92, n)
    phase = np.cumsum(f0 / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    src = lfilter([1.0], [1.0, -voice.tilt], pulses)
    src += voice.breath * rng.standard_normal(n)
    formants = _VOWELS[rng.integers(len(_VOWELS))] * voice.tract_scale
    y = np.zeros(n)
    for f, bw in zip(formants, _BANDWIDTHS):
        if f < fs / 2:
            y += _resonator(src, f, bw, fs)
    env = np.sin(np.linspace(0, np.pi, n)) ** 0.6
    return y * env


def speak(voice: Voice, duration_s: float, rng: np.random.Generator,
          sample_rate: int = CANONICAL_RATE, peak: float = 0.5) -> AudioClip:
    n_total = int(round(duration_s * sample_rate))
    out = np.zeros(n_total)
    pos = int(rng.integers(0, int(0.05 * sample_rate)))
    while pos < n_total:
        n = int(rng.uniform(0.12, 0.30) * sample_rate)
        seg = _syllable(voice, n, sample_rate, rng)[: n_total - pos]
        out[pos:pos + seg.size] = seg
        pos += seg.size + int(rng.uniform(0.02, 0.09) * sample_rate)
    out *= peak / np.max(np.abs(out))
    return AudioClip(out, sample_rate)


def make_toy_pool(out_dir: str | Path, n_speakers: int = 4, clips_per_speaker: int = 6,
                  seed: int = 0, duration_range: tuple[float, float] = (3.5, 7.0),
                  sample_rate: int = CANONICAL_RATE) -> Path:
    """Write ``<out_dir>/spk<NN>/clip<NN>.wav`` and return ``out_dir``."""
    out_dir = Path(out_dir)
    for s in range(n_speakers):
        voice = random_voice(new_rng(seed, s))
        for c in range(clips_per_speaker):
            rng = new_rng(seed, s, c)
            clip = speak(voice, float(rng.uniform(*duration_range)), rng, sample_rate)
            write_wav(out_dir / f"spk{s:02d}" / f"clip{c:02d}.wav", clip)
    return out_dir
