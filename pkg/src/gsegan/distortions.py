"""Aggressive, length-preserving waveform distortions.

Four transforms model severe channel damage: whispering (noise-excited
LPC resynthesis removes voicing but keeps the envelope), bandwidth
reduction (decimate and interpolate back), chunk removal (zeroed spans
inside speech), and peak clipping. ``compose_random`` activates each
independently with probability p in a fixed order and records enough to
replay the exact corruption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, resample_poly

from .audio_io import SpeechRegions, Waveform, detect_speech_regions
from .errors import ConfigError, DataError

TRANSFORM_ORDER = ("whisper", "reduce_bandwidth", "remove_chunks", "clip")


@dataclass(frozen=True)
class DistortionConfig:
    """Menus and activation probability for random composition."""

    activation_p: float = 0.4
    bandwidth_factors: tuple = (2, 4, 8)
    clip_factors: tuple = (0.3, 0.4, 0.5)
    max_chunks: int = 5
    chunk_gaussians: tuple = ((0.05, 0.025), (0.1, 0.05))  # (mean s, std s)
    chunk_min_ms: int = 10
    lpc_order: int = 18
    lpc_frame_ms: int = 25
    lpc_hop_ms: int = 10


@dataclass
class TransformRecord:
    """One applied transform with the parameters needed to replay it."""

    transform_id: str
    params: dict

    def to_dict(self) -> dict:
        return {"transform_id": self.transform_id, "params": self.params}


@dataclass
class AppliedDistortions:
    """Ordered record of every transform applied to one utterance."""

    records: list = field(default_factory=list)

    def transform_ids(self) -> list:
        return [r.transform_id for r in self.records]

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "AppliedDistortions":
        recs = []
        for r in d["records"]:
            params = dict(r["params"])
            if "chunks" in params:
                params["chunks"] = [tuple(c) for c in params["chunks"]]
            recs.append(TransformRecord(r["transform_id"], params))
        return cls(recs)


def _levinson(r: np.ndarray, order: int) -> np.ndarray:
    """Solve the LPC normal equations; returns [1, a1..a_order]."""
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + a[1:i] @ r[i - 1:0:-1]
        k = -acc / err
        a[1:i] += k * a[i - 1:0:-1]
        a[i] = k
        err *= 1.0 - k * k
        if err < 1e-15:
            err = 1e-15
    return a


def whisper(w: Waveform, rng: np.random.Generator | None = None,
            order: int = 18, frame_ms: int = 25, hop_ms: int = 10) -> Waveform:
    """Noise-excited LPC resynthesis: keeps the spectral envelope, kills
    the voicing.

    Per frame: Hann-windowed autocorrelation LPC of the given order, the
    excitation is white noise scaled to the residual energy, synthesized
    through 1/A(z), then overlap-added. Zero frames stay zero. The
    default rng is fixed so bare calls stay deterministic.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x = w.samples
    n = len(x)
    if n == 0:
        return Waveform(x.copy(), w.sample_rate)
    flen = w.sample_rate * frame_ms // 1000
    hop = w.sample_rate * hop_ms // 1000
    win = np.hanning(flen)
    n_frames = max(1, -(-n // hop))
    pad = (n_frames - 1) * hop + flen - n
    xp = np.concatenate([x, np.zeros(max(pad, 0))])

    starts = np.arange(n_frames) * hop
    frames = np.stack([xp[s:s + flen] for s in starts]) * win
    nfft = 1
    while nfft < 2 * flen:
        nfft *= 2
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, :order + 1]

    out = np.zeros_like(xp)
    wsum = np.zeros_like(xp)
    for i, s in enumerate(starts):
        noise = rng.standard_normal(flen)
        r = acf[i]
        if r[0] < 1e-12:
            continue  # silent frame contributes nothing
        r = r.copy()
        r[0] *= 1.0 + 1e-9  # diagonal loading keeps Levinson stable
        a = _levinson(r, order)
        resid = lfilter(a, [1.0], frames[i])
        gain = np.sqrt(np.mean(resid * resid))
        nrms = np.sqrt(np.mean(noise * noise))
        excitation = noise * (gain / max(nrms, 1e-12))
        synth = lfilter([1.0], a, excitation)
        out[s:s + flen] += synth * win
        wsum[s:s + flen] += win
    out = out / np.maximum(wsum, 1e-8)
    out = out[:n]
    peak = np.max(np.abs(out)) if n else 0.0
    if peak > 1.0:
        out = out / peak  # filter ringing can overshoot the unit range
    return Waveform(out, w.sample_rate)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Windowed-sinc polyphase resampling to ``target_rate``."""
    if target_rate <= 0:
        raise ConfigError("target rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    g = np.gcd(int(target_rate), int(w.sample_rate))
    y = resample_poly(w.samples, target_rate // g, w.sample_rate // g)
    return Waveform(y, target_rate)


def reduce_bandwidth(w: Waveform, factor: int) -> Waveform:
    """Anti-aliased decimation by ``factor`` and interpolation back.

    Output keeps the input length and rate but only the lowest
    8 kHz / factor of content survives.
    """
    if factor not in (2, 4, 8):
        raise ConfigError(f"bandwidth factor must be one of 2, 4, 8, got {factor}")
    x = w.samples
    n = len(x)
    if n == 0:
        return Waveform(x.copy(), w.sample_rate)
    down = resample_poly(x, 1, factor)
    up = resample_poly(down, factor, 1)
    if len(up) >= n:
        out = up[:n].copy()
    else:
        out = np.zeros(n)
        out[:len(up)] = up
    peak = np.max(np.abs(out))
    if peak > 1.0:
        out = out / peak
    return Waveform(out, w.sample_rate)


def draw_chunks(regions: SpeechRegions, rng: np.random.Generator,
                cfg: DistortionConfig | None = None) -> list:
    """Seeded chunk draws: k ~ U{1..max}, start uniform over speech
    samples, length from one of two Gaussians picked by a fair coin,
    clamped to at least 10 ms and capped at the region end.

    Draw order per chunk is (start, coin, length); tests replay it.
    """
    cfg = cfg or DistortionConfig()
    intervals = list(regions)
    total = sum(e - s for s, e in intervals)
    if total == 0:
        return []
    min_len = 16 * cfg.chunk_min_ms
    k = int(rng.integers(1, cfg.max_chunks + 1))
    chunks = []
    for _ in range(k):
        pos = int(rng.integers(0, total))
        for s, e in intervals:
            if pos < e - s:
                start, region_end = s + pos, e
                break
            pos -= e - s
        which = int(rng.random() < 0.5)
        mean_s, std_s = cfg.chunk_gaussians[which]
        length = int(round(rng.normal(mean_s, std_s) * 16000))
        length = max(length, min_len)
        length = min(length, region_end - start)
        chunks.append((int(start), int(length)))
    return chunks


def zero_chunks(w: Waveform, chunks: list) -> Waveform:
    out = w.samples.copy()
    for start, length in chunks:
        out[start:start + length] = 0.0
    return Waveform(out, w.sample_rate)


def remove_chunks(w: Waveform, regions: SpeechRegions | None = None,
                  rng: np.random.Generator | None = None,
                  cfg: DistortionConfig | None = None) -> Waveform:
    """Zero out randomly drawn chunks inside speech regions."""
    if regions is None:
        regions = detect_speech_regions(w)
    if rng is None:
        rng = np.random.default_rng(0)
    return zero_chunks(w, draw_chunks(regions, rng, cfg))


def clip_at(w: Waveform, tau: float) -> Waveform:
    """Clamp to [-tau, tau]; idempotent at a fixed threshold."""
    if tau < 0:
        raise ConfigError("clip threshold must be nonnegative")
    return Waveform(np.clip(w.samples, -tau, tau), w.sample_rate)


def clip(w: Waveform, factor: float) -> Waveform:
    """Clamp at factor times the signal's own peak magnitude."""
    if not 0.0 < factor <= 1.0:
        raise ConfigError(f"clip factor must lie in (0, 1], got {factor}")
    peak = float(np.max(np.abs(w.samples))) if len(w) else 0.0
    return clip_at(w, factor * peak)


def compose_random(w: Waveform, cfg: DistortionConfig | None = None,
                   rng: np.random.Generator | None = None):
    """Activate each transform independently with probability p, apply
    the active ones in the fixed order whisper, reduce_bandwidth,
    remove_chunks, clip, and return (distorted, AppliedDistortions).

    The rng draw order is: one vector of 4 activation uniforms, then the
    per-transform draws of each active transform in order. Identical
    seeds give bit-identical output and records.
    """
    cfg = cfg or DistortionConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    flags = rng.random(4) < cfg.activation_p
    cur = Waveform(w.samples.copy(), w.sample_rate)
    records = []
    if flags[0]:
        noise_seed = int(rng.integers(0, 2 ** 63))
        cur = whisper(cur, np.random.default_rng(noise_seed), cfg.lpc_order,
                      cfg.lpc_frame_ms, cfg.lpc_hop_ms)
        records.append(TransformRecord("whisper", {"noise_seed": noise_seed}))
    if flags[1]:
        factor = int(cfg.bandwidth_factors[int(rng.integers(0, len(cfg.bandwidth_factors)))])
        cur = reduce_bandwidth(cur, factor)
        records.append(TransformRecord("reduce_bandwidth", {"factor": factor}))
    if flags[2]:
        regions = detect_speech_regions(cur)
        chunks = draw_chunks(regions, rng, cfg)
        cur = zero_chunks(cur, chunks)
        records.append(TransformRecord("remove_chunks", {"chunks": chunks}))
    if flags[3]:
        factor = float(cfg.clip_factors[int(rng.integers(0, len(cfg.clip_factors)))])
        cur = clip(cur, factor)
        records.append(TransformRecord("clip", {"factor": factor}))
    return cur, AppliedDistortions(records)


def apply_recorded(w: Waveform, applied: AppliedDistortions,
                   cfg: DistortionConfig | None = None) -> Waveform:
    """Replay a recorded corruption bit-exactly."""
    cfg = cfg or DistortionConfig()
    cur = Waveform(w.samples.copy(), w.sample_rate)
    for rec in applied.records:
        if rec.transform_id == "whisper":
            cur = whisper(cur, np.random.default_rng(int(rec.params["noise_seed"])),
                          cfg.lpc_order, cfg.lpc_frame_ms, cfg.lpc_hop_ms)
        elif rec.transform_id == "reduce_bandwidth":
            cur = reduce_bandwidth(cur, int(rec.params["factor"]))
        elif rec.transform_id == "remove_chunks":
            cur = zero_chunks(cur, [tuple(c) for c in rec.params["chunks"]])
        elif rec.transform_id == "clip":
            cur = clip(cur, float(rec.params["factor"]))
        else:
            raise DataError(f"unknown transform id {rec.transform_id!r}")
    return cur


def activation_histogram(n_draws: int, p: float = 0.4,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Frequencies of 0..4 simultaneously active transforms over
    ``n_draws`` composition draws. Converges on Binomial(4, p)."""
    if rng is None:
        rng = np.random.default_rng(0)
    counts = (rng.random((n_draws, 4)) < p).sum(axis=1)
    return np.bincount(counts, minlength=5) / float(n_draws)
