"""Objective evaluation: mel cepstral distortion, F0 RMSE and
voiced/unvoiced disagreement, aggregated over paired corpora.

Reference and degraded signals stay sample-aligned by construction
(every distortion in this package preserves length), so no time
warping is applied anywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .errors import AlignmentError, PairingError
from .features import (COL_LOG_F0, COL_VOICED, LPS_STRIDE, LPS_WINDOW,
                       extract_acoustic_features, mfcc16, stft_magnitude_db)

# 10 / ln(10) * sqrt(2): dB scaling of the per-frame cepstral distance.
_MCD_CONST = (10.0 / math.log(10.0)) * math.sqrt(2.0)


def _samples(w) -> np.ndarray:
    return w.samples if hasattr(w, "samples") else np.asarray(w, dtype=np.float64)


def cepstral_distortion_frames(c_ref: np.ndarray, c_deg: np.ndarray) -> np.ndarray:
    """Per-frame distortion in dB between two (T, 16) MFCC matrices."""
    return _MCD_CONST * np.sqrt(np.sum((np.asarray(c_ref) - np.asarray(c_deg)) ** 2,
                                       axis=1))


def _waveform_mfcc(x: np.ndarray) -> np.ndarray:
    return mfcc16(stft_magnitude_db(x, LPS_WINDOW, LPS_STRIDE, LPS_WINDOW))


def mcd(ref, deg) -> float:
    """Mean per-frame mel cepstral distortion in dB (MFCCs 1..16)."""
    ref = _samples(ref)
    deg = _samples(deg)
    if len(ref) != len(deg):
        raise AlignmentError(f"length mismatch: {len(ref)} vs {len(deg)}")
    return float(cepstral_distortion_frames(_waveform_mfcc(ref),
                                            _waveform_mfcc(deg)).mean())


def _voicing(w) -> tuple[np.ndarray, np.ndarray]:
    theta = extract_acoustic_features(_samples(w)).data
    voiced = theta[:, COL_VOICED] > 0.5
    f0_hz = np.where(voiced, np.exp(theta[:, COL_LOG_F0]), 0.0)
    return voiced, f0_hz


def f0_rmse(ref, deg) -> float | None:
    """RMSE in linear Hz over frames voiced in both signals.

    Returns None when no co-voiced frames exist; the damage then shows
    up in uv_error instead.
    """
    ref = _samples(ref)
    deg = _samples(deg)
    if len(ref) != len(deg):
        raise AlignmentError(f"length mismatch: {len(ref)} vs {len(deg)}")
    v_ref, f_ref = _voicing(ref)
    v_deg, f_deg = _voicing(deg)
    both = v_ref & v_deg
    if not both.any():
        return None
    diff = f_ref[both] - f_deg[both]
    return float(np.sqrt(np.mean(diff * diff)))


def uv_error(ref, deg) -> float:
    """Percentage of frames whose voiced/unvoiced decisions disagree."""
    ref = _samples(ref)
    deg = _samples(deg)
    if len(ref) != len(deg):
        raise AlignmentError(f"length mismatch: {len(ref)} vs {len(deg)}")
    v_ref, _ = _voicing(ref)
    v_deg, _ = _voicing(deg)
    return float(100.0 * np.mean(v_ref != v_deg))


@dataclass
class MetricsReport:
    mcd_db: tuple
    f0_rmse_hz: tuple | None
    uv_error_pct: tuple
    n_utterances: int
    n_f0_utterances: int
    per_utterance: list

    def to_dict(self) -> dict:
        return {
            "n_utterances": self.n_utterances,
            "n_f0_utterances": self.n_f0_utterances,
            "mcd_db": {"mean": self.mcd_db[0], "std": self.mcd_db[1]},
            "f0_rmse_hz": (None if self.f0_rmse_hz is None else
                           {"mean": self.f0_rmse_hz[0], "std": self.f0_rmse_hz[1]}),
            "uv_error_pct": {"mean": self.uv_error_pct[0], "std": self.uv_error_pct[1]},
            "per_utterance": self.per_utterance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Three-column summary, standard deviation in parentheses."""
        def cell(pair):
            if pair is None:
                return "-"
            mean, std = pair
            if std is None:
                return f"{mean:.2f}"
            return f"{mean:.2f} ({std:.2f})"

        return (f"{'MCD [dB]':>14} {'RMSE [Hz]':>14} {'UV [%]':>14}\n"
                f"{cell(self.mcd_db):>14} {cell(self.f0_rmse_hz):>14} "
                f"{cell(self.uv_error_pct):>14}")


def _aggregate(values: list) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std()) if len(arr) >= 2 else None
    return (mean, std)


def evaluate_pairs(pairs: list) -> MetricsReport:
    """Metrics over (name, ref samples, deg samples) triples."""
    per_utt = []
    mcds = []
    rmses = []
    uvs = []
    for name, ref, deg in pairs:
        m = mcd(ref, deg)
        r = f0_rmse(ref, deg)
        u = uv_error(ref, deg)
        mcds.append(m)
        uvs.append(u)
        if r is not None:
            rmses.append(r)
        per_utt.append({"name": name, "mcd_db": m, "f0_rmse_hz": r,
                        "uv_error_pct": u})
    return MetricsReport(
        mcd_db=_aggregate(mcds),
        f0_rmse_hz=_aggregate(rmses) if rmses else None,
        uv_error_pct=_aggregate(uvs),
        n_utterances=len(pairs),
        n_f0_utterances=len(rmses),
        per_utterance=per_utt,
    )


def evaluate_corpus(ref_dir, deg_dir) -> MetricsReport:
    """Pair WAV files by name across two directories and evaluate."""
    ref_dir = Path(ref_dir)
    deg_dir = Path(deg_dir)
    ref_names = {p.name for p in ref_dir.glob("*.wav")}
    deg_names = {p.name for p in deg_dir.glob("*.wav")}
    if not ref_names:
        raise PairingError(f"no WAV files in {ref_dir}")
    missing = sorted(ref_names ^ deg_names)
    if missing:
        raise PairingError(f"unpaired files: {missing[:8]}")
    pairs = []
    for name in sorted(ref_names):
        ref = read_wav(ref_dir / name).samples
        deg = read_wav(deg_dir / name).samples
        pairs.append((name, ref, deg))
    return evaluate_pairs(pairs)
