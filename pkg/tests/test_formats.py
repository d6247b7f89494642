import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays
from scipy.io import wavfile

from farfield.dsp import Waveform, stft
from farfield.errors import FormatError, SampleRateError
from farfield.formats import (read_json, read_jsonl, read_tfb1, read_trials, read_wav,
                              to_pcm16, write_json, write_jsonl, write_tfb1, write_trials,
                              write_wav)


def test_float32_wav_round_trip_bit_exact(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, (3, 1000)).astype(np.float32)
    p = tmp_path / "a.wav"
    write_wav(Waveform(x), p)
    y = read_wav(p)
    assert y.samples.dtype == np.float32 and np.array_equal(y.samples, x)
    assert y.sample_rate == 16000


def test_mono_wav_round_trip(tmp_path):
    x = np.linspace(-0.5, 0.5, 100).astype(np.float32)
    write_wav(Waveform(x), tmp_path / "m.wav")
    y = read_wav(tmp_path / "m.wav")
    assert y.samples.shape == (1, 100) and np.array_equal(y.samples[0], x)


def test_pcm16_round_trip_within_quantisation(tmp_path):
    x = np.random.default_rng(1).uniform(-1, 1, (2, 5000))
    write_wav(Waveform(x), tmp_path / "p.wav", encoding="pcm16")
    y = read_wav(tmp_path / "p.wav").samples
    assert np.max(np.abs(y - x)) <= 1 / 32768


def test_pcm16_rounding_and_saturation():
    q = to_pcm16(np.array([0.5 / 32768, -0.5 / 32768, 1.5 / 32768, 1.0, -1.0, 2.0, -2.0]))
    assert q.tolist() == [1, -1, 2, 32767, -32768, 32767, -32768]


def test_rate_mismatch(tmp_path):
    p = tmp_path / "r.wav"
    wavfile.write(p, 44100, np.zeros(100, np.float32))
    with pytest.raises(SampleRateError):
        read_wav(p)
    assert read_wav(p, allow_rate=True).sample_rate == 44100


def test_unsupported_codec(tmp_path):
    p = tmp_path / "i.wav"
    wavfile.write(p, 16000, np.zeros(100, np.int32))
    with pytest.raises(FormatError):
        read_wav(p)


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    with pytest.raises(FormatError):
        read_wav(p)


def test_unknown_encoding(tmp_path):
    with pytest.raises(ValueError):
        write_wav(Waveform(np.zeros(10)), tmp_path / "x.wav", encoding="mp3")


def test_tfb1_float_round_trip(tmp_path):
    x = np.arange(6, dtype=np.float32).reshape(2, 3) / 7
    write_tfb1(x, tmp_path / "t.tfb1")
    y = read_tfb1(tmp_path / "t.tfb1")
    assert y.dtype == np.float32 and np.array_equal(y, x)
    raw = (tmp_path / "t.tfb1").read_bytes()
    assert raw[:4] == b"TFB1" and raw[4:8] == bytes([1, 0, 2, 0])
    assert struct.unpack("<2I", raw[8:16]) == (2, 3)
    assert raw[16:] == x.astype("<f4").tobytes()


def test_tfb1_complex_grid_preserves_bits(tmp_path):
    g = stft(np.random.default_rng(2).standard_normal((2, 3000))).values.astype(np.complex64)
    write_tfb1(g, tmp_path / "g.tfb1")
    y = read_tfb1(tmp_path / "g.tfb1")
    assert y.dtype == np.complex64 and y.shape == g.shape
    assert y.tobytes() == g.tobytes()


@settings(max_examples=50, deadline=None)
@given(x=arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=5),
                elements=st.floats(width=32, allow_nan=True, allow_infinity=True)))
def test_tfb1_round_trip_property(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("tfb") / "x.tfb1"
    write_tfb1(x, p)
    assert read_tfb1(p).tobytes() == x.tobytes()


def test_tfb1_huge_header_rejected_before_allocation(tmp_path):
    p = tmp_path / "h.tfb1"
    p.write_bytes(b"TFB1" + bytes([1, 0, 2, 0]) + struct.pack("<2I", 2 ** 16, 2 ** 16) + b"\0" * 10)
    with pytest.raises(FormatError, match="payload"):
        read_tfb1(p)
    p.write_bytes(b"TFB1" + bytes([1, 0, 1, 0]) + struct.pack("<I", 2 ** 32 - 1) + b"\0" * 10)
    with pytest.raises(FormatError):
        read_tfb1(p)


@pytest.mark.parametrize("blob", [
    b"TFB",
    b"TFB2\x01\x00\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00",
    b"TFB1\x02\x00\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00",
    b"TFB1\x01\x07\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00",
    b"TFB1\x01\x00\x01\x05\x01\x00\x00\x00\x00\x00\x00\x00",
    b"TFB1\x01\x00\x02\x00\x01\x00\x00\x00",
    b"TFB1\x01\x00\x01\x00\x02\x00\x00\x00\x00\x00\x00\x00",
    b"TFB1\x01\x00\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00\x00",
])
def test_tfb1_integrity_errors(tmp_path, blob):
    p = tmp_path / "e.tfb1"
    p.write_bytes(blob)
    with pytest.raises(FormatError):
        read_tfb1(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    write_tfb1(np.zeros(3, np.float32), tmp_path / "a.tfb1")
    write_wav(Waveform(np.zeros(10)), tmp_path / "a.wav")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.tfb1", "a.wav"]


def test_trials_round_trip(tmp_path):
    labels = np.array([True, False, True])
    scores = np.array([0.5, -1.25, 3.0])
    write_trials(labels, scores, tmp_path / "t.csv")
    l2, s2 = read_trials(tmp_path / "t.csv")
    assert np.array_equal(l2, labels) and np.array_equal(s2, scores)


def test_trials_without_header_and_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("target,1\nnontarget,0.5\n\n")
    labels, scores = read_trials(p)
    assert labels.tolist() == [True, False] and scores.tolist() == [1.0, 0.5]
    for bad in ("impostor,1\n", "target\n", "target,abc\n", "target,nan\n"):
        p.write_text(bad)
        with pytest.raises(FormatError):
            read_trials(p)


def test_json_helpers(tmp_path):
    write_json({"b": 1, "a": [1.5]}, tmp_path / "x.json")
    assert (tmp_path / "x.json").read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    assert read_json(tmp_path / "x.json") == {"a": [1.5], "b": 1}
    write_jsonl([{"x": 1}, {"y": 2}], tmp_path / "x.jsonl")
    assert read_jsonl(tmp_path / "x.jsonl") == [{"x": 1}, {"y": 2}]
    (tmp_path / "bad.jsonl").write_text("{\n")
    with pytest.raises(FormatError):
        read_jsonl(tmp_path / "bad.jsonl")
