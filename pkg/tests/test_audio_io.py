import struct

import numpy as np
import pytest

from gsegan import audio_io
from gsegan.audio_io import (SpeechRegions, Waveform, detect_speech_regions,
                             random_chunk, read_wav, trim_silence, write_wav)
from gsegan.errors import FormatError, RangeError, UnsupportedFormatError


def _wav_bytes(fmt_tag, channels, rate, bits, payload):
    fmt = struct.pack("<IHHIIHH", 16, fmt_tag, channels, rate,
                      rate * channels * bits // 8, channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_pcm16_roundtrip_error_bound(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1.0, 1.0, 4096)
    p = tmp_path / "rt.wav"
    write_wav(p, Waveform(x))
    back = read_wav(p)
    assert back.sample_rate == 16000
    assert len(back) == 4096
    assert np.max(np.abs(back.samples - x)) <= 1.0 / 32768.0


def test_full_scale_positive_square_wave(tmp_path):
    p = tmp_path / "fs.wav"
    p.write_bytes(_wav_bytes(1, 1, 16000, 16, struct.pack("<4h", 32767, 32767, 32767, 32767)))
    w = read_wav(p)
    assert np.all(w.samples == 32767.0 / 32768.0)


def test_write_rejects_out_of_range(tmp_path):
    with pytest.raises(RangeError):
        write_wav(tmp_path / "bad.wav", Waveform(np.array([0.0, 1.5])))
    with pytest.raises(RangeError):
        write_wav(tmp_path / "nan.wav", Waveform(np.array([np.nan])))


def test_write_accepts_exact_unit_peak(tmp_path):
    p = tmp_path / "peak.wav"
    write_wav(p, Waveform(np.array([1.0, -1.0])))
    w = read_wav(p)
    assert w.samples[0] == 32767.0 / 32768.0
    assert w.samples[1] == -1.0


def test_malformed_header_rejected(tmp_path):
    p = tmp_path / "junk.wav"
    p.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(FormatError):
        read_wav(p)


def test_truncated_data_rejected(tmp_path):
    good = _wav_bytes(1, 1, 16000, 16, b"\x00" * 64)
    p = tmp_path / "trunc.wav"
    p.write_bytes(good[:-30])
    with pytest.raises(FormatError):
        read_wav(p)


def test_unsupported_encoding_rejected(tmp_path):
    p = tmp_path / "alaw.wav"
    p.write_bytes(_wav_bytes(6, 1, 16000, 8, b"\x00" * 16))
    with pytest.raises(UnsupportedFormatError):
        read_wav(p)
    p2 = tmp_path / "pcm8.wav"
    p2.write_bytes(_wav_bytes(1, 1, 16000, 8, b"\x00" * 16))
    with pytest.raises(UnsupportedFormatError):
        read_wav(p2)


def test_float32_payload_read(tmp_path):
    vals = np.array([0.5, -0.25, 0.125, 1.0], dtype="<f4")
    p = tmp_path / "f32.wav"
    p.write_bytes(_wav_bytes(3, 1, 16000, 32, vals.tobytes()))
    w = read_wav(p)
    assert np.array_equal(w.samples, vals.astype(np.float64))


def test_stereo_takes_first_channel(tmp_path):
    inter = struct.pack("<6h", 100, -100, 200, -200, 300, -300)
    p = tmp_path / "st.wav"
    p.write_bytes(_wav_bytes(1, 2, 16000, 16, inter))
    w = read_wav(p)
    assert np.array_equal(w.samples * 32768.0, [100, 200, 300])


def test_vad_zero_signal_has_no_regions():
    assert len(detect_speech_regions(Waveform(np.zeros(16000)))) == 0


def test_vad_constant_full_scale_is_one_region():
    w = Waveform(np.full(8000, 0.9))
    regions = detect_speech_regions(w)
    assert regions.intervals == [(0, 8000)]


def test_vad_finds_bursts_and_is_gain_invariant():
    rng = np.random.default_rng(3)
    x = np.zeros(16000)
    t = np.arange(4800) / 16000.0
    burst = 0.5 * np.sin(2 * np.pi * 220 * t)
    x[1600:6400] = burst
    x[9600:14400] = burst
    x += 1e-6 * rng.standard_normal(16000)
    r1 = detect_speech_regions(Waveform(x)).intervals
    r2 = detect_speech_regions(Waveform(x * 0.05)).intervals
    assert r1 == r2
    assert len(r1) == 2
    (s0, e0), (s1, e1) = r1
    assert abs(s0 - 1600) <= 320 and abs(e0 - 6400) <= 320
    assert abs(s1 - 9600) <= 320 and abs(e1 - 14400) <= 320


def test_trim_silence_edge_gaps():
    sr = 16000
    x = np.zeros(5 * sr)
    x[2 * sr:3 * sr] = 0.5
    out = trim_silence(Waveform(x))
    assert len(out) <= sr + 2 * (sr // 10)
    assert np.sum(np.abs(out.samples) > 0.25) == sr


def test_trim_silence_internal_gap_exact():
    sr = 16000
    x = np.concatenate([np.full(sr, 0.5), np.zeros(sr), np.full(sr, 0.5)])
    regions = SpeechRegions([(0, sr), (2 * sr, 3 * sr)])
    out = trim_silence(Waveform(x), regions)
    assert len(out) == 2 * sr + sr // 10
    assert np.array_equal(out.samples[:sr], x[:sr])
    assert np.array_equal(out.samples[-sr:], x[-sr:])
    gap = out.samples[sr:sr + sr // 10]
    assert np.all(gap == 0.0)


def test_trim_silence_speech_order_preserved():
    sr = 16000
    x = np.zeros(3 * sr)
    ramp = np.linspace(0.1, 0.9, sr // 2)
    x[4000:4000 + sr // 2] = ramp
    x[sr * 2:sr * 2 + sr // 2] = ramp[::-1]
    regions = detect_speech_regions(Waveform(x))
    out = trim_silence(Waveform(x), regions)
    kept = out.samples[np.abs(out.samples) > 0.05]
    orig = x[np.abs(x) > 0.05]
    assert np.array_equal(kept, orig)


def test_random_chunk_pads_short_input():
    w = Waveform(np.full(1000, 0.25))
    out = random_chunk(w, 16384, np.random.default_rng(0))
    assert out.shape == (16384,)
    assert np.all(out[:1000] == 0.25)
    assert np.all(out[1000:] == 0.0)


def test_random_chunk_exact_length_identity():
    x = np.random.default_rng(1).uniform(-1, 1, 16384)
    out = random_chunk(Waveform(x), 16384, np.random.default_rng(0))
    assert np.array_equal(out, x)


def test_random_chunk_uniform_start_and_deterministic():
    x = np.arange(20000, dtype=np.float64) / 20000.0
    a = random_chunk(Waveform(x), 16384, np.random.default_rng(42))
    b = random_chunk(Waveform(x), 16384, np.random.default_rng(42))
    assert np.array_equal(a, b)
    start = int(a[0] * 20000 + 0.5)
    assert 0 <= start <= 20000 - 16384
    assert np.array_equal(a, x[start:start + 16384])


def test_chunk_constant_matches_model_window():
    assert audio_io.CHUNK_SAMPLES == 16384
    assert audio_io.SAMPLE_RATE == 16000
