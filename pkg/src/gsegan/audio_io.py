"""Waveform I/O, energy VAD, silence trimming, and chunk extraction.

Canonical signal form everywhere in the package: mono float at 16 kHz,
samples nominally in [-1, 1]. Files are RIFF/WAVE; PCM16 is the
canonical on-disk encoding, IEEE float32 is accepted on read.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, RangeError, UnsupportedFormatError

SAMPLE_RATE = 16000
CHUNK_SAMPLES = 16384  # ~1.02 s at 16 kHz, the model window

_PCM_SCALE = 32768.0


@dataclass
class Waveform:
    """Mono signal plus its rate. ``samples`` is a 1-D float64 array."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("Waveform samples must be 1-D")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / float(self.sample_rate)


@dataclass
class SpeechRegions:
    """Half-open [start, end) sample intervals flagged as speech."""

    intervals: list = field(default_factory=list)

    def __post_init__(self):
        prev_end = 0
        for start, end in self.intervals:
            if start < prev_end or end <= start:
                raise ValueError("regions must be ordered, disjoint, nonempty")
            prev_end = end

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def total_samples(self) -> int:
        return sum(end - start for start, end in self.intervals)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated WAV file while reading {what}")
    return buf


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file as a mono float64 Waveform.

    PCM16 and IEEE float32 payloads are accepted; multichannel files
    contribute their first channel. PCM16 maps to q / 32768.
    """
    with open(path, "rb") as fh:
        riff = _read_exact(fh, 12, "RIFF header")
        if riff[0:4] != b"RIFF" or riff[8:12] != b"WAVE":
            raise FormatError("not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            head = fh.read(8)
            if len(head) == 0:
                break
            if len(head) != 8:
                raise FormatError("truncated chunk header")
            cid, size = head[0:4], struct.unpack("<I", head[4:8])[0]
            if cid == b"fmt ":
                if size < 16:
                    raise FormatError("fmt chunk too small")
                fmt = _read_exact(fh, size, "fmt chunk")
            elif cid == b"data":
                data = _read_exact(fh, size, "data chunk")
            else:
                fh.seek(size, 1)
            if size % 2:
                fh.seek(1, 1)
        if fmt is None or data is None:
            raise FormatError("missing fmt or data chunk")

    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if channels < 1:
        raise FormatError("zero channels")
    if tag == 1 and bits == 16:
        raw = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = raw.astype(np.float64) / _PCM_SCALE
    elif tag == 3 and bits == 32:
        raw = np.frombuffer(data[: len(data) - len(data) % (4 * channels)], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"unsupported WAV encoding (format tag {tag}, {bits}-bit)"
        )
    if channels > 1:
        samples = samples[::channels].copy()
    return Waveform(samples, int(rate))


def write_wav(path, w: Waveform) -> None:
    """Write a Waveform as mono PCM16 little-endian.

    Samples must be finite and within [-1, 1]; quantization is
    round(x * 32768) clipped to int16, so write-then-read moves a sample
    by at most 1/32768.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    if not np.isfinite(x).all():
        raise RangeError("cannot encode non-finite samples")
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 1.0:
        raise RangeError(f"samples exceed [-1, 1] (peak {peak:.6g})")
    q = np.clip(np.round(x * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 36 + len(payload)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate,
                             w.sample_rate * 2, 2, 16))
        fh.write(b"data")
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        if len(payload) % 2:
            fh.write(b"\x00")


def detect_speech_regions(w: Waveform, frame_ms: int = 20,
                          threshold_db: float = 40.0) -> SpeechRegions:
    """Energy VAD: a frame is speech iff its RMS clears the loudest
    frame's RMS minus ``threshold_db``. Consecutive speech frames merge
    into [start, end) sample intervals clipped to the signal length.
    """
    x = w.samples
    n = len(x)
    if n == 0:
        return SpeechRegions([])
    flen = max(1, w.sample_rate * frame_ms // 1000)
    n_frames = -(-n // flen)
    padded = np.zeros(n_frames * flen, dtype=np.float64)
    padded[:n] = x
    frames = padded.reshape(n_frames, flen)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    peak = float(rms.max())
    floor = peak * 10.0 ** (-threshold_db / 20.0)
    speech = rms > floor
    intervals = []
    i = 0
    while i < n_frames:
        if speech[i]:
            j = i
            while j + 1 < n_frames and speech[j + 1]:
                j += 1
            intervals.append((i * flen, min((j + 1) * flen, n)))
            i = j + 1
        else:
            i += 1
    return SpeechRegions(intervals)


def trim_silence(w: Waveform, regions: SpeechRegions | None = None,
                 max_silence_ms: int = 100) -> Waveform:
    """Shorten every silent run to at most ``max_silence_ms``.

    Speech samples pass through untouched and in order; each gap keeps
    its edge adjacent to speech. A signal with no detected speech
    collapses to its first ``max_silence_ms``.
    """
    if regions is None:
        regions = detect_speech_regions(w)
    x = w.samples
    n = len(x)
    keep_max = w.sample_rate * max_silence_ms // 1000
    if len(regions) == 0:
        return Waveform(x[: min(n, keep_max)].copy(), w.sample_rate)
    pieces = []
    first_start = regions.intervals[0][0]
    if first_start > 0:
        lead = min(first_start, keep_max)
        pieces.append(x[first_start - lead:first_start])
    prev_end = None
    for start, end in regions:
        if prev_end is not None and start > prev_end:
            pieces.append(x[prev_end: prev_end + min(start - prev_end, keep_max)])
        pieces.append(x[start:end])
        prev_end = end
    if prev_end < n:
        pieces.append(x[prev_end: prev_end + min(n - prev_end, keep_max)])
    return Waveform(np.concatenate(pieces), w.sample_rate)


def random_chunk(w: Waveform, length: int = CHUNK_SAMPLES,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniformly placed window of ``length`` samples.

    Shorter signals are zero-padded at the end; an exact-length signal
    comes back as-is. The draw consumes exactly one integer from ``rng``
    when a choice exists.
    """
    x = w.samples
    n = len(x)
    if n < length:
        out = np.zeros(length, dtype=np.float64)
        out[:n] = x
        return out
    if n == length:
        return x.copy()
    if rng is None:
        rng = np.random.default_rng(0)
    start = int(rng.integers(0, n - length + 1))
    return x[start:start + length].copy()
