"""Synthetic pseudo-speech corpus.

Each utterance is built from alternating voiced and unvoiced segments
between short leading/trailing silences. Voiced segments are harmonic
stacks following a slowly modulated F0 contour inside 80-300 Hz, with
harmonic amplitudes shaped by a random three-bump formant envelope;
unvoiced segments are the same envelope driving white noise at lower
level. Everything derives from one Generator, so a fixed seed yields
byte-identical WAV files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, Waveform, read_wav, write_wav
from .errors import DataError

_PEAK = 0.9
_EDGE_RAMP = 0.015  # seconds of raised-cosine fade at segment edges


def _formant_envelope(rng: np.random.Generator):
    centers = np.array([rng.uniform(300.0, 800.0),
                        rng.uniform(900.0, 2200.0),
                        rng.uniform(2400.0, 3500.0)])
    widths = rng.uniform(90.0, 220.0, size=3)
    gains = rng.uniform(0.6, 1.0, size=3)

    def envelope(freq_hz: np.ndarray) -> np.ndarray:
        f = np.asarray(freq_hz, dtype=np.float64)[..., None]
        bumps = gains * np.exp(-0.5 * ((f - centers) / widths) ** 2)
        return bumps.sum(axis=-1) + 0.01

    return envelope


def _edge_ramp(n: int) -> np.ndarray:
    ramp_n = min(int(_EDGE_RAMP * SAMPLE_RATE), n // 2)
    window = np.ones(n)
    if ramp_n > 0:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp_n) / ramp_n)
        window[:ramp_n] = fade
        window[-ramp_n:] = fade[::-1]
    return window


def _voiced_segment(rng: np.random.Generator, n: int, envelope) -> np.ndarray:
    base = rng.uniform(95.0, 250.0)
    mod_rate = rng.uniform(0.5, 2.5)
    mod_depth = rng.uniform(0.03, 0.12)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(n) / SAMPLE_RATE
    f0 = np.clip(base * (1.0 + mod_depth * np.sin(2 * np.pi * mod_rate * t + phase0)),
                 80.0, 300.0)
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    n_harmonics = max(3, int(7600.0 / f0.max()))
    amps = envelope(np.arange(1, n_harmonics + 1) * float(f0.mean()))
    amps = amps / (np.arange(1, n_harmonics + 1) ** 0.5)  # gentle rolloff
    out = np.zeros(n)
    offsets = rng.uniform(0.0, 2 * np.pi, size=n_harmonics)
    for h in range(1, n_harmonics + 1):
        out += amps[h - 1] * np.sin(h * phase + offsets[h - 1])
    lfo = 1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.8, 3.0) * t
                              + rng.uniform(0.0, 2 * np.pi))
    return out * lfo * _edge_ramp(n)


def _unvoiced_segment(rng: np.random.Generator, n: int, envelope) -> np.ndarray:
    noise = rng.standard_normal(n)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    spectrum *= envelope(freqs)
    shaped = np.fft.irfft(spectrum, n=n)
    rms = float(np.sqrt(np.mean(shaped ** 2)))
    if rms > 0:
        shaped /= rms
    return 0.25 * shaped * _edge_ramp(n)


def synth_utterance(rng: np.random.Generator, seconds: float | None = None) -> Waveform:
    """One pseudo-speech utterance; all randomness from rng."""
    if seconds is None:
        seconds = rng.uniform(1.4, 2.4)
    total = int(seconds * SAMPLE_RATE)
    envelope = _formant_envelope(rng)
    lead = int(rng.uniform(0.06, 0.12) * SAMPLE_RATE)
    tail = int(rng.uniform(0.06, 0.12) * SAMPLE_RATE)
    body = [np.zeros(lead)]
    remaining = total - lead - tail
    while remaining > 0:
        voiced_n = min(remaining, int(rng.uniform(0.3, 0.7) * SAMPLE_RATE))
        body.append(_voiced_segment(rng, voiced_n, envelope))
        remaining -= voiced_n
        if remaining <= 0:
            break
        if rng.random() < 0.5:
            unvoiced_n = min(remaining, int(rng.uniform(0.05, 0.12) * SAMPLE_RATE))
            body.append(_unvoiced_segment(rng, unvoiced_n, envelope))
            remaining -= unvoiced_n
    body.append(np.zeros(tail))
    x = np.concatenate(body)
    peak = float(np.max(np.abs(x)))
    if peak > 0:
        x = x * (_PEAK / peak)
    return Waveform(x)


def synth_corpus(n_utterances: int, rng: np.random.Generator, out_dir) -> list:
    """Write n utterances as WAV files; returns the paths in order."""
    if n_utterances <= 0:
        raise DataError("corpus size must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_utterances):
        w = synth_utterance(rng)
        path = out_dir / f"utt{i:04d}.wav"
        write_wav(path, w)
        paths.append(path)
    return paths


def load_corpus_dir(path) -> list:
    """All WAVs in a directory as (name, samples), sorted by name."""
    path = Path(path)
    files = sorted(path.glob("*.wav"))
    if not files:
        raise DataError(f"no WAV files found in {path}")
    return [(p.stem, read_wav(p).samples) for p in files]
