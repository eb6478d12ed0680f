"""Acoustic analysis: log-power spectra, MFCCs, F0, energy, ZCR.

Per 16 ms frame the feature vector holds 257 log-power bins, 16 MFCCs,
log-F0, a voiced flag, log-RMS energy, and zero-crossing rate: 277
dimensions. These are both the regression targets for the critic's
acoustic branch and the basis of the objective metrics.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .errors import FormatError, ShapeError, UnsupportedFormatError

SAMPLE_RATE = 16000
FRAME_STRIDE_MS = 16
LPS_WINDOW = 512          # 32 ms
LPS_STRIDE = 256          # 16 ms
LPS_BINS = 257
N_MEL = 40
N_MFCC = 16
F0_WINDOW = 1280          # 80 ms; four periods at the 50 Hz floor. The
                          # extra length keeps noise autocorrelation peaks
                          # well under the voicing threshold.
F0_MIN_HZ = 50.0
F0_MAX_HZ = 400.0
VOICING_THRESHOLD = 0.3
RMS_FLOOR = 1e-4          # frames quieter than this are never voiced
DB_EPS = 1e-10            # magnitude floor, -200 dB
N_FEATURES = 277

# Column layout of the acoustic matrix.
LPS_SLICE = slice(0, 257)
MFCC_SLICE = slice(257, 273)
COL_LOG_F0 = 273
COL_VOICED = 274
COL_ENERGY = 275
COL_ZCR = 276

_MAGIC = b"GSEF"
_VERSION = 1


@dataclass
class AcousticMatrix:
    """Per-frame acoustic targets, one row per 16 ms frame."""

    data: np.ndarray
    frame_stride_ms: int = FRAME_STRIDE_MS

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] != N_FEATURES:
            raise ShapeError(f"acoustic matrix must be (frames, {N_FEATURES})")

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def voiced(self) -> np.ndarray:
        return self.data[:, COL_VOICED]

    @property
    def log_f0(self) -> np.ndarray:
        return self.data[:, COL_LOG_F0]

    @property
    def mfcc(self) -> np.ndarray:
        return self.data[:, MFCC_SLICE]


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Mirror out-of-range indices without repeating the edge sample."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    j = np.mod(idx, period)
    return np.where(j >= n, period - j, j)


def frame_indices(n_samples: int, window: int, stride: int) -> np.ndarray:
    """Index map (frames, window) tiling the signal once per stride.

    Frames are centered on their stride cell; boundary overhang uses
    reflection, so the frame count is always ceil(n / stride).
    """
    n_frames = -(-n_samples // stride)
    offset = (window - stride) // 2
    starts = np.arange(n_frames) * stride - offset
    idx = starts[:, None] + np.arange(window)[None, :]
    return _reflect_indices(idx, n_samples)


@lru_cache(maxsize=8)
def _hann(window: int) -> np.ndarray:
    return np.hanning(window)


def stft_magnitude_db(x: np.ndarray, window: int = LPS_WINDOW,
                      stride: int = LPS_STRIDE, fft_size: int | None = None) -> np.ndarray:
    """Hann STFT magnitude in dB, floored at -200 dB.

    Returns (ceil(len/stride), fft_size//2 + 1). The floor makes silence
    a finite constant instead of -inf.
    """
    x = np.asarray(x, dtype=np.float64)
    if fft_size is None:
        fft_size = window
    if fft_size < window:
        raise ShapeError("fft_size must cover the window")
    frames = x[frame_indices(len(x), window, stride)] * _hann(window)
    spec = np.fft.rfft(frames, n=fft_size, axis=1)
    return 20.0 * np.log10(np.maximum(np.abs(spec), DB_EPS))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=4)
def mel_filterbank(n_mel: int = N_MEL, n_bins: int = LPS_BINS,
                   sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filters (n_mel, n_bins), each row normalized to
    unit sum so a flat power spectrum yields equal band energies."""
    f_max = sample_rate / 2.0
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(f_max), n_mel + 2))
    bin_hz = np.arange(n_bins) * f_max / (n_bins - 1)
    bank = np.zeros((n_mel, n_bins))
    for m in range(n_mel):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_hz - lo) / max(mid - lo, 1e-12)
        down = (hi - bin_hz) / max(hi - mid, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
        s = bank[m].sum()
        if s > 0:
            bank[m] /= s
    return bank


def log_mel_energies(lps: np.ndarray) -> np.ndarray:
    """Natural-log mel band energies from dB log-power spectra.

    Accepts one frame (257,) or a matrix (frames, 257).
    """
    lps = np.atleast_2d(np.asarray(lps, dtype=np.float64))
    if lps.shape[1] != LPS_BINS:
        raise ShapeError(f"expected {LPS_BINS} spectral bins")
    power = (10.0 ** (lps / 20.0)) ** 2
    mel = power @ mel_filterbank().T
    return np.log(np.maximum(mel, DB_EPS ** 2))


def mfcc_from_log_mel(log_mel: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II of log mel energies, coefficients 1..16.

    The zeroth coefficient (overall level) is excluded on purpose.
    """
    coeffs = dct(np.atleast_2d(log_mel), type=2, norm="ortho", axis=1)
    return coeffs[:, 1:N_MFCC + 1]


def mfcc16(lps: np.ndarray) -> np.ndarray:
    """16 MFCCs per frame from dB log-power spectra."""
    out = mfcc_from_log_mel(log_mel_energies(lps))
    return out[0] if np.asarray(lps).ndim == 1 else out


def _ncc(frames: np.ndarray, lag_max: int) -> np.ndarray:
    """Normalized autocorrelation r(tau) for tau = 0..lag_max, batched.

    r(tau) = sum x[n] x[n+tau] / sqrt(sum_head x^2 * sum_tail x^2).
    """
    t, n = frames.shape
    nfft = 1
    while nfft < 2 * n:
        nfft *= 2
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, :lag_max + 1]
    csq = np.cumsum(frames * frames, axis=1)
    total = csq[:, -1:]
    taus = np.arange(lag_max + 1)
    head = csq[:, n - 1 - taus]
    tail = total - np.concatenate([np.zeros((t, 1)), csq[:, taus[1:] - 1]], axis=1)
    return acf / np.sqrt(head * tail + 1e-20)


def _f0_batch(frames: np.ndarray, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized F0 and voicing for raw frames (frames, >=640)."""
    t, n = frames.shape
    lag_min = int(np.ceil(sample_rate / F0_MAX_HZ))
    lag_max = int(sample_rate / F0_MIN_HZ)
    if n < 2 * lag_max:
        raise ShapeError(f"F0 frames need at least {2 * lag_max} samples")
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    r = _ncc(frames, lag_max + 1)
    band = r[:, lag_min:lag_max + 1]
    peak = band.max(axis=1)
    voiced = (peak > VOICING_THRESHOLD) & (rms > RMS_FLOOR)

    # Shortest lag whose local maximum sits within 3% of the global peak;
    # this suppresses octave-down errors on strongly harmonic frames.
    left = np.concatenate([np.full((t, 1), -np.inf), band[:, :-1]], axis=1)
    right = np.concatenate([band[:, 1:], np.full((t, 1), -np.inf)], axis=1)
    local = (band >= left) & (band >= right)
    qualify = local & (band >= 0.97 * peak[:, None])
    has_q = qualify.any(axis=1)
    first = np.argmax(qualify, axis=1)
    fallback = np.argmax(band, axis=1)
    pick = np.where(has_q, first, fallback)

    lag = lag_min + pick
    rows = np.arange(t)
    r0 = r[rows, lag]
    rm = r[rows, np.maximum(lag - 1, 0)]
    rp = r[rows, np.minimum(lag + 1, lag_max + 1)]
    denom = rm - 2.0 * r0 + rp
    delta = np.where(np.abs(denom) > 1e-12, 0.5 * (rm - rp) / np.where(denom == 0, 1, denom), 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    f0 = np.clip(sample_rate / (lag + delta), F0_MIN_HZ, F0_MAX_HZ)
    log_f0 = np.where(voiced, np.log(f0), 0.0)
    return log_f0, voiced.astype(np.float64)


def estimate_f0(frame: np.ndarray, sample_rate: int = SAMPLE_RATE) -> tuple[float, int]:
    """(log_f0, voiced) for one raw analysis frame.

    Voiced iff the peak normalized autocorrelation in the 50-400 Hz lag
    band clears 0.3 and the frame RMS clears an absolute energy floor;
    unvoiced frames report log_f0 = 0 as a sentinel. The decision is
    invariant to global gain above the floor because the correlation is
    normalized.
    """
    frame = np.asarray(frame, dtype=np.float64)
    log_f0, voiced = _f0_batch(frame[None, :], sample_rate)
    return float(log_f0[0]), int(voiced[0])


def extract_acoustic_features(x: np.ndarray, sample_rate: int = SAMPLE_RATE) -> AcousticMatrix:
    """Full per-frame analysis of a waveform at 16 ms stride.

    Output rows: [257 LPS dB | 16 MFCC | log-F0 | voiced | log-RMS | ZCR],
    ceil(len/256) of them.
    """
    if sample_rate != SAMPLE_RATE:
        raise ShapeError("acoustic features are defined at 16 kHz")
    x = np.asarray(x, dtype=np.float64)
    lps = stft_magnitude_db(x, LPS_WINDOW, LPS_STRIDE, LPS_WINDOW)
    mfcc = mfcc_from_log_mel(log_mel_energies(lps))

    raw = x[frame_indices(len(x), LPS_WINDOW, LPS_STRIDE)]
    rms = np.sqrt(np.mean(raw * raw, axis=1))
    energy = np.log(np.maximum(rms, DB_EPS))
    zcr = np.mean(raw[:, :-1] * raw[:, 1:] < 0, axis=1)

    f0_frames = x[frame_indices(len(x), F0_WINDOW, LPS_STRIDE)]
    log_f0, voiced = _f0_batch(f0_frames, sample_rate)

    theta = np.concatenate(
        [lps, mfcc, log_f0[:, None], voiced[:, None], energy[:, None], zcr[:, None]],
        axis=1,
    )
    return AcousticMatrix(theta)


def save_features(path, am: AcousticMatrix) -> None:
    """Serialize an acoustic matrix: GSEF magic, u32 version, u32 frame
    count, u32 dims, u32 stride in ms, then row-major little-endian
    float32 payload."""
    data = np.ascontiguousarray(am.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, data.shape[0], data.shape[1],
                             am.frame_stride_ms))
        fh.write(data.tobytes())


def load_features(path) -> AcousticMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError("not a feature file (bad magic)")
        head = fh.read(16)
        if len(head) != 16:
            raise FormatError("truncated feature header")
        version, n_frames, n_dims, stride_ms = struct.unpack("<IIII", head)
        if version != _VERSION:
            raise UnsupportedFormatError(f"feature file version {version}")
        payload = fh.read(4 * n_frames * n_dims)
        if len(payload) != 4 * n_frames * n_dims:
            raise FormatError("truncated feature payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_dims)
    return AcousticMatrix(data.astype(np.float64), int(stride_ms))
