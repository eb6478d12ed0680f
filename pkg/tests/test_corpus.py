"""Synthetic pseudo-speech: determinism, voicing content, and disk I/O."""

import numpy as np
import pytest

from gsegan.audio_io import SAMPLE_RATE, detect_speech_regions, read_wav
from gsegan.corpus import load_corpus_dir, synth_corpus, synth_utterance
from gsegan.errors import DataError
from gsegan.features import extract_acoustic_features


def test_utterance_deterministic_per_seed():
    a = synth_utterance(np.random.default_rng(42))
    b = synth_utterance(np.random.default_rng(42))
    c = synth_utterance(np.random.default_rng(43))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_utterance_shape_and_level():
    for seed in range(4):
        w = synth_utterance(np.random.default_rng(seed))
        assert 1.4 <= w.duration <= 2.8
        assert w.sample_rate == SAMPLE_RATE
        np.testing.assert_allclose(np.max(np.abs(w.samples)), 0.9, atol=1e-9)


def test_utterance_fixed_length():
    w = synth_utterance(np.random.default_rng(0), seconds=1.5)
    assert len(w) == int(1.5 * SAMPLE_RATE)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_utterance_mostly_voiced(seed):
    w = synth_utterance(np.random.default_rng(seed))
    feats = extract_acoustic_features(w.samples)
    regions = detect_speech_regions(w)
    assert len(regions) >= 1
    # voiced fraction judged over active speech only
    active = np.zeros(len(w), dtype=bool)
    for start, stop in regions:
        active[start:stop] = True
    frame_active = active[np.minimum(np.arange(feats.n_frames) * 256,
                                     len(w) - 1)]
    voiced = feats.voiced[frame_active]
    assert voiced.mean() >= 0.5


def test_corpus_write_and_load(tmp_path):
    paths = synth_corpus(3, np.random.default_rng(5), tmp_path)
    assert [p.name for p in paths] == ["utt0000.wav", "utt0001.wav",
                                       "utt0002.wav"]
    loaded = load_corpus_dir(tmp_path)
    assert [name for name, _ in loaded] == ["utt0000", "utt0001", "utt0002"]
    again = read_wav(paths[1])
    assert np.array_equal(loaded[1][1], again.samples)


def test_corpus_deterministic(tmp_path):
    a = synth_corpus(2, np.random.default_rng(9), tmp_path / "a")
    b = synth_corpus(2, np.random.default_rng(9), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert np.array_equal(read_wav(pa).samples, read_wav(pb).samples)


def test_corpus_errors(tmp_path):
    with pytest.raises(DataError):
        synth_corpus(0, np.random.default_rng(0), tmp_path)
    empty = tmp_path / "none"
    empty.mkdir()
    with pytest.raises(DataError):
        load_corpus_dir(empty)
