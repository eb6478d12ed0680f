"""Evaluation metrics against closed-form and synthetic oracles."""

import numpy as np
import pytest

from gsegan.audio_io import SAMPLE_RATE, Waveform, write_wav
from gsegan.distortions import whisper
from gsegan.errors import AlignmentError, PairingError
from gsegan.metrics import (cepstral_distortion_frames, evaluate_corpus,
                            evaluate_pairs, f0_rmse, mcd, uv_error)


def sawtooth(f0, seconds=1.0, amp=0.6):
    n = int(seconds * SAMPLE_RATE)
    phase = np.cumsum(np.full(n, f0 / SAMPLE_RATE))
    return amp * (2.0 * (phase % 1.0) - 1.0)


def sine(f0, seconds=1.0, amp=0.6):
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return amp * np.sin(2 * np.pi * f0 * t)


# ----------------------------------------------------------------------- mcd

def test_mcd_unit_single_dimension_difference():
    c_ref = np.zeros((5, 16))
    c_deg = np.zeros((5, 16))
    c_deg[:, 3] = 1.0
    frames = cepstral_distortion_frames(c_ref, c_deg)
    assert np.all(np.abs(frames - 6.1421) < 1e-3)


def test_mcd_identity_is_zero():
    w = sawtooth(150.0)
    assert mcd(w, w) == 0.0


def test_mcd_symmetric():
    rng = np.random.default_rng(0)
    a = 0.5 * rng.standard_normal(SAMPLE_RATE)
    b = 0.5 * rng.standard_normal(SAMPLE_RATE)
    assert abs(mcd(a, b) - mcd(b, a)) < 1e-12


def test_mcd_gain_invariant():
    rng = np.random.default_rng(1)
    a = 0.4 * rng.standard_normal(SAMPLE_RATE)
    b = a + 0.05 * rng.standard_normal(SAMPLE_RATE)
    assert abs(mcd(a, b) - mcd(0.5 * a, 0.5 * b)) < 1e-9


def test_mcd_orders_damage():
    rng = np.random.default_rng(2)
    w = sawtooth(120.0)
    light = w + 0.001 * rng.standard_normal(len(w))
    heavy = w + 0.2 * rng.standard_normal(len(w))
    assert mcd(w, light) < mcd(w, heavy)


def test_mcd_length_mismatch():
    with pytest.raises(AlignmentError):
        mcd(np.zeros(1000), np.zeros(1001))


# ------------------------------------------------------------------- f0 rmse

def test_f0_rmse_identity_is_zero():
    w = sawtooth(200.0)
    assert f0_rmse(w, w) == 0.0


def test_f0_rmse_synthetic_offset():
    ref = sawtooth(200.0, seconds=2.0)
    deg = sawtooth(210.0, seconds=2.0)
    value = f0_rmse(ref, deg)
    assert value is not None
    assert abs(value - 10.0) < 2.0


def test_f0_rmse_absent_without_covoiced_frames():
    rng = np.random.default_rng(3)
    ref = sawtooth(150.0)
    deg = whisper(Waveform(ref), rng=rng).samples
    value = f0_rmse(ref, deg)
    # Whisper removes voicing; co-voiced frames all but vanish. The few
    # that may survive give a number; a fully unvoiced signal gives None.
    noise = 0.3 * rng.standard_normal(len(ref))
    assert f0_rmse(ref, noise) is None or f0_rmse(ref, noise) >= 0.0
    assert value is None or value >= 0.0
    assert f0_rmse(np.zeros(SAMPLE_RATE), np.zeros(SAMPLE_RATE)) is None


# ------------------------------------------------------------------ uv error

def test_uv_error_identity_is_zero():
    w = sawtooth(180.0)
    assert uv_error(w, w) == 0.0


def test_uv_error_symmetric():
    a = sawtooth(140.0)
    b = np.concatenate([sawtooth(140.0, seconds=0.5), np.zeros(SAMPLE_RATE // 2)])
    assert uv_error(a, b) == uv_error(b, a)


def test_uv_error_whisper_removes_voicing():
    ref = sawtooth(150.0, seconds=2.0)
    deg = whisper(Waveform(ref), rng=np.random.default_rng(4)).samples
    assert uv_error(ref, deg) > 90.0


def test_uv_error_half_flipped():
    ref = sine(160.0, seconds=2.0)
    deg = np.concatenate([sine(160.0, seconds=1.0),
                          np.zeros(SAMPLE_RATE, dtype=np.float64)])
    value = uv_error(ref, deg)
    assert 38.0 < value < 62.0


# --------------------------------------------------------------- aggregation

def test_evaluate_pairs_hand_arithmetic():
    a = sawtooth(150.0)
    b = sawtooth(150.0) + 0.01 * np.random.default_rng(5).standard_normal(SAMPLE_RATE)
    report = evaluate_pairs([("u1", a, a), ("u2", a, b)])
    m1 = mcd(a, a)
    m2 = mcd(a, b)
    mean = (m1 + m2) / 2.0
    std = float(np.std([m1, m2]))
    assert abs(report.mcd_db[0] - mean) < 1e-12
    assert abs(report.mcd_db[1] - std) < 1e-12
    assert report.n_utterances == 2
    assert len(report.per_utterance) == 2


def test_evaluate_pairs_single_item_has_no_std():
    a = sawtooth(150.0)
    report = evaluate_pairs([("u1", a, a)])
    assert report.mcd_db == (0.0, None)


def test_report_serialization():
    a = sawtooth(150.0)
    report = evaluate_pairs([("u1", a, a), ("u2", a, a)])
    d = report.to_dict()
    assert d["mcd_db"]["mean"] == 0.0
    assert d["uv_error_pct"]["mean"] == 0.0
    assert "MCD [dB]" in report.table()
    assert report.to_json().startswith("{")


def test_evaluate_corpus_identity(tmp_path):
    ref = tmp_path / "ref"
    deg = tmp_path / "deg"
    ref.mkdir()
    deg.mkdir()
    for i in range(2):
        w = sawtooth(120.0 + 20 * i)
        write_wav(ref / f"u{i}.wav", Waveform(w))
        write_wav(deg / f"u{i}.wav", Waveform(w))
    report = evaluate_corpus(ref, deg)
    assert report.mcd_db[0] == 0.0
    assert report.uv_error_pct[0] == 0.0
    assert report.f0_rmse_hz[0] == 0.0


def test_evaluate_corpus_rejects_unpaired(tmp_path):
    ref = tmp_path / "ref"
    deg = tmp_path / "deg"
    ref.mkdir()
    deg.mkdir()
    write_wav(ref / "a.wav", Waveform(sawtooth(120.0)))
    write_wav(ref / "b.wav", Waveform(sawtooth(130.0)))
    write_wav(deg / "a.wav", Waveform(sawtooth(120.0)))
    with pytest.raises(PairingError):
        evaluate_corpus(ref, deg)


def test_evaluate_corpus_rejects_empty(tmp_path):
    (tmp_path / "ref").mkdir()
    (tmp_path / "deg").mkdir()
    with pytest.raises(PairingError):
        evaluate_corpus(tmp_path / "ref", tmp_path / "deg")
